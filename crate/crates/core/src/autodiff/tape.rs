use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Sigmoid(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    Abs(Var),
    Softmax(Var, f64),
    MeanRows(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    MulScalar(Var, Var),
    DivScalar(Var, Var),
    Select(Var, usize),
    Dot(Var, Var),
    Norm(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records forward ops for one computation and replays them backwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape { op, left: a.shape(), right: b.shape() });
    }
    Ok(())
}

fn scalar_shape(op: &'static str, s: &Tensor) -> Result<()> {
    if s.shape() != (1, 1) {
        return Err(Error::Shape { op, left: s.shape(), right: (1, 1) });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Clears all recorded nodes so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(name.to_string()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node { value: store.value(id).clone(), op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols != y.rows {
            return Err(Error::Shape { op: "matmul", left: x.shape(), right: y.shape() });
        }
        let out = x.matmul(y);
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let out = x.zip(y, |p, q| p + q);
        self.push(out, Op::Add(a, b), "add")
    }

    /// Adds a `1 x c` row to every row of an `r x c` tensor.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows != 1 || b.cols != x.cols {
            return Err(Error::Shape { op: "add_row", left: x.shape(), right: b.shape() });
        }
        let mut out = x.clone();
        for r in 0..out.rows {
            for (o, &bv) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&b.data) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(a, bias), "add_row")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let out = x.zip(y, |p, q| p - q);
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let out = x.zip(y, |p, q| p * q);
        self.push(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * k);
        self.push(out, Op::Scale(a, k), "scale")
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v + k);
        self.push(out, Op::AddConst(a), "add_const")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a), "ln")
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi), "clamp")
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::abs);
        self.push(out, Op::Abs(a), "abs")
    }

    /// Row-wise `softmax(x / tau)` with max subtraction.
    pub fn softmax(&mut self, a: Var, tau: f64) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(Error::Argument(format!("softmax temperature must be > 0, got {tau}")));
        }
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out.data[r * x.cols..(r + 1) * x.cols];
            let mut z = 0.0;
            for (o, &v) in o.iter_mut().zip(row) {
                *o = ((v - max) / tau).exp();
                z += *o;
            }
            o.iter_mut().for_each(|v| *v /= z);
        }
        self.push(out, Op::Softmax(a, tau), "softmax")
    }

    /// Column means as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows == 0 {
            return Err(Error::Argument("mean over zero rows".into()));
        }
        let mut out = Tensor::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, &v) in out.data.iter_mut().zip(x.row_slice(r)) {
                *o += v;
            }
        }
        let k = x.rows as f64;
        out.data.iter_mut().for_each(|v| *v /= k);
        self.push(out, Op::MeanRows(a), "mean_rows")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data.iter().sum());
        self.push(out, Op::Sum(a), "sum")
    }

    /// Side-by-side concatenation of tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows;
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows != rows {
                return Err(Error::Shape { op: "concat_cols", left: self.value(parts[0]).shape(), right: t.shape() });
            }
            cols += t.cols;
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let t = self.value(p);
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row_slice(r));
                off += t.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    /// Vertical stacking of tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols != cols {
                return Err(Error::Shape { op: "concat_rows", left: self.value(parts[0]).shape(), right: t.shape() });
            }
            data.extend_from_slice(&t.data);
            rows += t.rows;
        }
        self.push(Tensor { rows, cols, data }, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start > end || end > x.rows {
            return Err(Error::Shape { op: "slice_rows", left: x.shape(), right: (start, end) });
        }
        let out = Tensor { rows: end - start, cols: x.cols, data: x.data[start * x.cols..end * x.cols].to_vec() };
        self.push(out, Op::SliceRows(a, start), "slice_rows")
    }

    /// `out[k] = a[idx[k]]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows) {
            return Err(Error::Shape { op: "gather_rows", left: x.shape(), right: (bad, 0) });
        }
        let mut data = Vec::with_capacity(idx.len() * x.cols);
        for &i in idx {
            data.extend_from_slice(x.row_slice(i));
        }
        let out = Tensor { rows: idx.len(), cols: x.cols, data };
        self.push(out, Op::GatherRows(a, idx.to_vec()), "gather_rows")
    }

    /// `out[idx[k]] += a[k]` into an `rows x c` zero tensor.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let x = self.value(a);
        if idx.len() != x.rows || idx.iter().any(|&i| i >= rows) {
            return Err(Error::Shape { op: "scatter_add_rows", left: x.shape(), right: (rows, idx.len()) });
        }
        let mut out = Tensor::zeros(rows, x.cols);
        for (k, &i) in idx.iter().enumerate() {
            for (o, &v) in out.data[i * x.cols..(i + 1) * x.cols].iter_mut().zip(x.row_slice(k)) {
                *o += v;
            }
        }
        // Recorded with a marker of the output height.
        let mut marker = idx.to_vec();
        marker.push(rows);
        self.push(out, Op::ScatterRows(a, marker), "scatter_add_rows")
    }

    /// `s * a` for a `1 x 1` variable `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        scalar_shape("mul_scalar", self.value(s))?;
        let k = self.value(s).item();
        let out = self.value(a).map(|v| v * k);
        self.push(out, Op::MulScalar(a, s), "mul_scalar")
    }

    /// `a / s` for a `1 x 1` variable `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        scalar_shape("div_scalar", self.value(s))?;
        let k = self.value(s).item();
        let out = self.value(a).map(|v| v / k);
        self.push(out, Op::DivScalar(a, s), "div_scalar")
    }

    /// Element `(r, c)` as a `1 x 1` tensor.
    pub fn select(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let x = self.value(a);
        if r >= x.rows || c >= x.cols {
            return Err(Error::Shape { op: "select", left: x.shape(), right: (r, c) });
        }
        let out = Tensor::scalar(x.get(r, c));
        let flat = r * x.cols + c;
        self.push(out, Op::Select(a, flat), "select")
    }

    /// Frobenius inner product as a `1 x 1` tensor.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("dot", x, y)?;
        let out = Tensor::scalar(x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum());
        self.push(out, Op::Dot(a, b), "dot")
    }

    /// Frobenius (L2) norm as a `1 x 1` tensor.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data.iter().map(|v| v * v).sum::<f64>().sqrt());
        self.push(out, Op::Norm(a), "l2_norm")
    }

    /// Backpropagates from the scalar `loss`, adding `d loss / d param` into
    /// the store's gradient slots.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.backward_scaled(loss, 1.0, store)
    }

    /// Backpropagates `scale * loss`.
    pub fn backward_scaled(&mut self, loss: Var, scale: f64, store: &mut ParamStore) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        scalar_shape("backward", self.value(loss))?;
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(scale));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let acc = |v: Var, t: Tensor, grads: &mut Vec<Option<Tensor>>| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate_grad(*id, &g),
                Op::MatMul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(*a, g.matmul(&y.transpose()), &mut grads);
                    acc(*b, x.transpose().matmul(&g), &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.clone(), &mut grads);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, &v) in gb.data.iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.map(|v| -v), &mut grads);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(*a, g.zip(y, |p, q| p * q), &mut grads);
                    acc(*b, g.zip(x, |p, q| p * q), &mut grads);
                }
                Op::Scale(a, k) => acc(*a, g.map(|v| v * k), &mut grads),
                Op::AddConst(a) => acc(*a, g.clone(), &mut grads),
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    acc(*a, g.zip(x, |p, q| if q > 0.0 { p } else { 0.0 }), &mut grads);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, g.zip(y, |p, s| p * s * (1.0 - s)), &mut grads);
                }
                Op::Ln(a) => {
                    let x = &self.nodes[a.0].value;
                    acc(*a, g.zip(x, |p, q| p / q), &mut grads);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &self.nodes[a.0].value;
                    acc(*a, g.zip(x, |p, q| if q > *lo && q < *hi { p } else { 0.0 }), &mut grads);
                }
                Op::Abs(a) => {
                    let x = &self.nodes[a.0].value;
                    acc(*a, g.zip(x, |p, q| if q > 0.0 { p } else if q < 0.0 { -p } else { 0.0 }), &mut grads);
                }
                Op::Softmax(a, tau) => {
                    let y = &node.value;
                    let mut gx = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols {
                            gx.data[r * y.cols + c] = yr[c] * (gr[c] - inner) / tau;
                        }
                    }
                    acc(*a, gx, &mut grads);
                }
                Op::MeanRows(a) => {
                    let x = &self.nodes[a.0].value;
                    let k = x.rows as f64;
                    let mut gx = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for (o, &v) in gx.data[r * x.cols..(r + 1) * x.cols].iter_mut().zip(&g.data) {
                            *o = v / k;
                        }
                    }
                    acc(*a, gx, &mut grads);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    acc(*a, Tensor::filled(r, c, g.item()), &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.nodes[p.0].value.shape();
                        let mut gp = Tensor::zeros(r, c);
                        for row in 0..r {
                            gp.data[row * c..(row + 1) * c]
                                .copy_from_slice(&g.data[row * g.cols + off..row * g.cols + off + c]);
                        }
                        off += c;
                        acc(p, gp, &mut grads);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.nodes[p.0].value.shape();
                        let gp = Tensor { rows: r, cols: c, data: g.data[off * c..(off + r) * c].to_vec() };
                        off += r;
                        acc(p, gp, &mut grads);
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let mut gx = Tensor::zeros(r, c);
                    gx.data[start * c..start * c + g.data.len()].copy_from_slice(&g.data);
                    acc(*a, gx, &mut grads);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let mut gx = Tensor::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, &v) in gx.data[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(k)) {
                            *o += v;
                        }
                    }
                    acc(*a, gx, &mut grads);
                }
                Op::ScatterRows(a, marker) => {
                    let idx = &marker[..marker.len() - 1];
                    let (r, c) = self.nodes[a.0].value.shape();
                    let mut gx = Tensor::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        gx.data[k * c..(k + 1) * c].copy_from_slice(g.row_slice(i));
                    }
                    acc(*a, gx, &mut grads);
                }
                Op::MulScalar(a, s) => {
                    let (x, k) = (&self.nodes[a.0].value, self.nodes[s.0].value.item());
                    let gs: f64 = g.data.iter().zip(&x.data).map(|(p, q)| p * q).sum();
                    acc(*a, g.map(|v| v * k), &mut grads);
                    acc(*s, Tensor::scalar(gs), &mut grads);
                }
                Op::DivScalar(a, s) => {
                    let (x, k) = (&self.nodes[a.0].value, self.nodes[s.0].value.item());
                    let gs: f64 = -g.data.iter().zip(&x.data).map(|(p, q)| p * q).sum::<f64>() / (k * k);
                    acc(*a, g.map(|v| v / k), &mut grads);
                    acc(*s, Tensor::scalar(gs), &mut grads);
                }
                Op::Select(a, flat) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let mut gx = Tensor::zeros(r, c);
                    gx.data[*flat] = g.item();
                    acc(*a, gx, &mut grads);
                }
                Op::Dot(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let k = g.item();
                    acc(*a, y.map(|v| v * k), &mut grads);
                    acc(*b, x.map(|v| v * k), &mut grads);
                }
                Op::Norm(a) => {
                    let x = &self.nodes[a.0].value;
                    let norm = node.value.item();
                    let k = g.item();
                    let gx = if norm > 0.0 { x.map(|v| k * v / norm) } else { Tensor::zeros(x.rows, x.cols) };
                    acc(*a, gx, &mut grads);
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn random(rng: &mut crate::rng::Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central-difference check of `f` with respect to every entry of every
    /// parameter in `store`.
    fn check_grads(store: &mut ParamStore, f: &dyn Fn(&mut Tape, &ParamStore) -> Var) {
        store.zero_grad();
        let mut tape = Tape::new();
        let out = f(&mut tape, store);
        tape.backward(out, store).unwrap();
        let h = 1e-5;
        for id in store.ids().collect::<Vec<_>>() {
            let analytic = store.grad(id).clone();
            for k in 0..analytic.len() {
                let orig = store.value(id).data()[k];
                let eval = |v: f64| {
                    let mut s = store.clone();
                    s.value_mut(id).data_mut()[k] = v;
                    let mut t = Tape::new();
                    let o = f(&mut t, &s);
                    t.value(o).item()
                };
                let numeric = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                let a = analytic.data()[k];
                if a.abs() < 1e-8 && numeric.abs() < 1e-8 {
                    continue;
                }
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                assert!(rel < 1e-4, "{}[{k}]: analytic {a} numeric {numeric}", store.name(id));
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(&[0.0, 0.0, 0.0])).unwrap();
        let y = t.softmax(x, 1.0).unwrap();
        for &v in t.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = t.constant(Tensor::row(&[2f64.ln(), 0.0, 0.0])).unwrap();
        let y = t.softmax(x, 1.0).unwrap();
        let v = t.value(y).data();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.25).abs() < 1e-15 && (v[2] - 0.25).abs() < 1e-15);
        assert!(matches!(t.softmax(x, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = seeded(3);
        let mut t = Tape::new();
        let x = t.constant(random(&mut rng, 5, 7).map(|v| v * 40.0)).unwrap();
        let y = t.softmax(x, 0.3).unwrap();
        let out = t.value(y);
        for r in 0..5 {
            let s: f64 = out.row_slice(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(out.row_slice(r).iter().all(|&v| v > 0.0 && v < 1.0 || v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut s = ParamStore::new();
        let id = s.insert("x", Tensor::scalar(0.0)).unwrap();
        let mut t = Tape::new();
        let x = t.param(&s, id);
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).item(), 0.5);
        t.backward(y, &mut s).unwrap();
        assert_eq!(s.grad(id).item(), 0.25);
    }

    #[test]
    fn linear_map_gradient_is_input() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::row(&[0.3, -2.0, 5.0])).unwrap();
        let mut t = Tape::new();
        let w = t.param(&s, id);
        let x = t.constant(Tensor::row(&[1.5, 2.5, -4.0])).unwrap();
        let l = t.dot(w, x).unwrap();
        t.backward(l, &mut s).unwrap();
        assert_eq!(s.grad(id).data(), &[1.5, 2.5, -4.0]);
    }

    #[test]
    fn backward_twice_errors_until_reset() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut t = Tape::new();
        let w = t.param(&s, id);
        t.backward(w, &mut s).unwrap();
        assert!(matches!(t.backward(w, &mut s), Err(Error::BackwardTwice)));
        t.reset();
        let w = t.param(&s, id);
        t.backward(w, &mut s).unwrap();
    }

    #[test]
    fn unreached_param_has_zero_grad() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::scalar(2.0)).unwrap();
        let b = s.insert("b", Tensor::scalar(3.0)).unwrap();
        let mut t = Tape::new();
        let va = t.param(&s, a);
        let _vb = t.param(&s, b);
        let l = t.scale(va, 4.0).unwrap();
        t.backward(l, &mut s).unwrap();
        assert_eq!(s.grad(a).item(), 4.0);
        assert_eq!(s.grad(b).item(), 0.0);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3)).unwrap();
        let b = t.constant(Tensor::zeros(2, 3)).unwrap();
        match t.matmul(a, b) {
            Err(Error::Shape { left, right, .. }) => assert_eq!((left, right), ((2, 3), (2, 3))),
            other => panic!("{other:?}"),
        }
        assert!(t.add_row(a, b).is_err());
    }

    #[test]
    fn non_finite_values_trip_numeric_error() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(t.ln(a), Err(Error::Numeric(_))));
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = seeded(11);
        let mut s = ParamStore::new();
        let a = s.insert("a", random(&mut rng, 4, 3)).unwrap();
        let b = s.insert("b", random(&mut rng, 3, 2)).unwrap();
        let bias = s.insert("bias", random(&mut rng, 1, 2)).unwrap();
        let c = s.insert("c", random(&mut rng, 4, 2)).unwrap();
        let k = s.insert("k", Tensor::scalar(0.7)).unwrap();
        let f = |t: &mut Tape, s: &ParamStore| -> Var {
            let a = t.param(s, a);
            let b = t.param(s, b);
            let bias = t.param(s, bias);
            let c = t.param(s, c);
            let k = t.param(s, k);
            let ab = t.matmul(a, b).unwrap();
            let h = t.add_row(ab, bias).unwrap();
            let h2 = t.add(h, c).unwrap();
            let r = t.relu(h2).unwrap();
            let sg = t.sigmoid(h).unwrap();
            let m = t.mul(r, sg).unwrap();
            let d = t.sub(m, c).unwrap();
            let sm = t.softmax(d, 0.5).unwrap();
            let cat = t.concat_cols(&[sm, d]).unwrap();
            let g = t.gather_rows(cat, &[0, 2, 2, 3]).unwrap();
            let sc = t.scatter_add_rows(g, &[1, 0, 1, 4], 5).unwrap();
            let sl = t.slice_rows(sc, 0, 4).unwrap();
            let st = t.concat_rows(&[sl, cat]).unwrap();
            let mr = t.mean_rows(st).unwrap();
            let ms = t.mul_scalar(mr, k).unwrap();
            let cl = t.clamp(sg, 0.3, 0.7).unwrap();
            let lnv = t.ln(cl).unwrap();
            let ab2 = t.abs(d).unwrap();
            let n = t.l2_norm(ab2).unwrap();
            let dt = t.dot(sg, c).unwrap();
            let q = t.div_scalar(dt, n).unwrap();
            let sel = t.select(ms, 0, 1).unwrap();
            let s1 = t.sum(lnv).unwrap();
            let s2 = t.sum(ms).unwrap();
            let tot = t.add(s1, s2).unwrap();
            let tot = t.add(tot, q).unwrap();
            let tot = t.add(tot, sel).unwrap();
            let tot = t.add_const(tot, 1.0).unwrap();
            t.scale(tot, 0.5).unwrap()
        };
        check_grads(&mut s, &f);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut rng = seeded(5);
            let mut t = Tape::new();
            let a = t.constant(random(&mut rng, 6, 6)).unwrap();
            let b = t.matmul(a, a).unwrap();
            let c = t.softmax(b, 0.7).unwrap();
            t.value(c).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
