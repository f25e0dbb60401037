//! Dense bounded-variable primal simplex.
//!
//! Every constraint row gets a slack (`[0, inf)` for LE, `[0, 0]` for EQ) so
//! the system is `A x + s = b`. Nonbasic variables sit at a finite bound (or
//! at zero when free). Rows whose initial slack would violate its bounds get
//! an artificial column; phase one drives the artificial sum to zero. The
//! entering rule is Dantzig's largest reduced cost, switching to Bland's rule
//! for the rest of the solve after a streak of degenerate pivots.

use super::{LpSolution, LpStatus, TOL_FEAS, TOL_PIVOT};
use crate::instances::{Row, Sense};
use crate::{Error, Result};

const TOL_DUAL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum At {
    Lower,
    Upper,
    Zero,
    Basic,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `B^-1 [A | I | R]`, row-major.
    t: Vec<f64>,
    basis: Vec<usize>,
    beta: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    state: Vec<At>,
    value: Vec<f64>,
    reduced: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    bland: bool,
}

/// Solves `min c'x` over `rows` and box bounds. `rows` may contain empty rows.
pub(crate) fn solve_dense(c: &[f64], rows: &[&Row], lo: &[f64], hi: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    if lo.iter().zip(hi).any(|(l, u)| l > u) {
        return Ok(LpSolution::infeasible(n));
    }
    // Empty rows are constant checks.
    let mut live: Vec<&Row> = Vec::with_capacity(rows.len());
    for r in rows {
        if r.is_empty() {
            let ok = match r.sense {
                Sense::Le => 0.0 <= r.rhs + TOL_FEAS,
                Sense::Eq => r.rhs.abs() <= TOL_FEAS,
            };
            if !ok {
                return Ok(LpSolution::infeasible(n));
            }
        } else {
            live.push(r);
        }
    }
    let m = live.len();

    // Initial nonbasic values for structurals.
    let mut x0 = vec![0.0; n];
    let mut st0 = vec![At::Zero; n];
    for j in 0..n {
        if lo[j].is_finite() {
            x0[j] = lo[j];
            st0[j] = At::Lower;
        } else if hi[j].is_finite() {
            x0[j] = hi[j];
            st0[j] = At::Upper;
        }
    }
    // Residuals decide which rows need artificials.
    let mut resid = vec![0.0; m];
    let mut needs_art = Vec::new();
    for (i, r) in live.iter().enumerate() {
        let s = r.rhs - r.activity(&x0);
        resid[i] = s;
        let slack_ok = match r.sense {
            Sense::Le => s >= 0.0,
            Sense::Eq => s == 0.0,
        };
        if !slack_ok {
            needs_art.push(i);
        }
    }
    let arts = needs_art.len();
    let cols = n + m + arts;
    let mut tab = Tableau {
        rows: m,
        cols,
        t: vec![0.0; m * cols],
        basis: vec![0; m],
        beta: vec![0.0; m],
        lo: vec![0.0; cols],
        hi: vec![0.0; cols],
        state: vec![At::Basic; cols],
        value: vec![0.0; cols],
        reduced: vec![0.0; cols],
        iterations: 0,
        max_iterations: 5_000 + 50 * (m + cols),
        bland: false,
    };
    tab.lo[..n].copy_from_slice(lo);
    tab.hi[..n].copy_from_slice(hi);
    tab.state[..n].copy_from_slice(&st0);
    tab.value[..n].copy_from_slice(&x0);
    for (i, r) in live.iter().enumerate() {
        let s = n + i;
        tab.lo[s] = 0.0;
        tab.hi[s] = match r.sense {
            Sense::Le => f64::INFINITY,
            Sense::Eq => 0.0,
        };
    }

    // Rows with artificials: sign*r = resid, basis = artificial, slack nonbasic at 0.
    let mut art_of_row = vec![usize::MAX; m];
    for (k, &i) in needs_art.iter().enumerate() {
        art_of_row[i] = n + m + k;
    }
    for (i, r) in live.iter().enumerate() {
        let sign = if art_of_row[i] != usize::MAX && resid[i] < 0.0 { -1.0 } else { 1.0 };
        // Row i of B^-1 A: basis column has coefficient `sign` (art) or 1 (slack).
        let row = &mut tab.t[i * cols..(i + 1) * cols];
        for (&j, &a) in r.indices.iter().zip(&r.coefs) {
            row[j] = a * sign;
        }
        row[n + i] = sign;
        if art_of_row[i] != usize::MAX {
            let a = art_of_row[i];
            row[a] = 1.0;
            tab.basis[i] = a;
            tab.beta[i] = resid[i].abs();
            tab.state[n + i] = At::Lower;
            tab.value[n + i] = 0.0;
            tab.lo[a] = 0.0;
            tab.hi[a] = f64::INFINITY;
        } else {
            tab.basis[i] = n + i;
            tab.beta[i] = resid[i];
        }
    }

    if arts > 0 {
        let mut cost1 = vec![0.0; cols];
        for a in n + m..cols {
            cost1[a] = 1.0;
        }
        tab.price(&cost1);
        if tab.run()? == LpStatus::Unbounded {
            // Phase one is bounded below by zero; treat as numerical trouble.
            return Err(Error::Numeric("phase-one simplex reported unbounded".into()));
        }
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + m)
            .map(|i| tab.beta[i])
            .sum();
        let scale = 1.0 + live.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeas > TOL_FEAS * scale {
            return Ok(LpSolution::infeasible(n));
        }
        for a in n + m..cols {
            tab.hi[a] = 0.0;
            if tab.state[a] != At::Basic {
                tab.state[a] = At::Lower;
                tab.value[a] = 0.0;
            }
        }
    }

    let mut cost2 = vec![0.0; cols];
    cost2[..n].copy_from_slice(c);
    tab.price(&cost2);
    let status = tab.run()?;
    if status == LpStatus::Unbounded {
        return Ok(LpSolution { status, x: vec![0.0; n], objective: f64::NEG_INFINITY });
    }
    let mut full = tab.value.clone();
    for (i, &b) in tab.basis.iter().enumerate() {
        full[b] = tab.beta[i];
    }
    let mut x = full[..n].to_vec();
    for j in 0..n {
        // Clean round-off against the bounds.
        x[j] = x[j].clamp(lo[j], hi[j]);
    }
    let objective = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}

impl Tableau {
    fn price(&mut self, cost: &[f64]) {
        let cols = self.cols;
        self.reduced.copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * cols..(i + 1) * cols];
                for (d, &a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.reduced[b] = 0.0;
        }
    }

    fn entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            let dir = match self.state[j] {
                At::Basic => continue,
                _ if self.lo[j] == self.hi[j] => continue,
                At::Lower if self.reduced[j] < -TOL_DUAL => 1.0,
                At::Upper if self.reduced[j] > TOL_DUAL => -1.0,
                At::Zero if self.reduced[j].abs() > TOL_DUAL => -self.reduced[j].signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(b, _)| self.reduced[j].abs() > self.reduced[b].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    fn run(&mut self) -> Result<LpStatus> {
        let cols = self.cols;
        let mut degenerate = 0usize;
        loop {
            let Some((q, dir)) = self.entering() else {
                return Ok(LpStatus::Optimal);
            };
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::IterationLimit(self.max_iterations));
            }

            // Ratio test.
            let mut step = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, bool)> = None; // (row, leaves at lower)
            for i in 0..self.rows {
                let alpha = dir * self.t[i * cols + q];
                let b = self.basis[i];
                let (limit, to_lower) = if alpha > TOL_PIVOT {
                    if !self.lo[b].is_finite() {
                        continue;
                    }
                    (((self.beta[i] - self.lo[b]) / alpha).max(0.0), true)
                } else if alpha < -TOL_PIVOT {
                    if !self.hi[b].is_finite() {
                        continue;
                    }
                    (((self.hi[b] - self.beta[i]) / -alpha).max(0.0), false)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if limit < step => true,
                    Some((r, _)) if limit == step => {
                        if self.bland {
                            b < self.basis[r]
                        } else {
                            self.t[i * cols + q].abs() > self.t[r * cols + q].abs()
                        }
                    }
                    _ => false,
                };
                if better {
                    step = limit;
                    leave = Some((i, to_lower));
                }
            }
            if step.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }

            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_STREAK {
                    self.bland = true;
                }
            } else {
                degenerate = 0;
            }

            for i in 0..self.rows {
                self.beta[i] -= dir * step * self.t[i * cols + q];
            }
            let entering_value = self.value[q] + dir * step;

            let Some((r, to_lower)) = leave else {
                // Bound flip.
                if dir > 0.0 {
                    self.state[q] = At::Upper;
                    self.value[q] = self.hi[q];
                } else {
                    self.state[q] = At::Lower;
                    self.value[q] = self.lo[q];
                }
                continue;
            };

            let out = self.basis[r];
            self.state[out] = if to_lower { At::Lower } else { At::Upper };
            self.value[out] = if to_lower { self.lo[out] } else { self.hi[out] };
            self.state[q] = At::Basic;
            self.basis[r] = q;
            self.beta[r] = entering_value;

            let piv = self.t[r * cols + q];
            {
                let row = &mut self.t[r * cols..(r + 1) * cols];
                for v in row.iter_mut() {
                    *v /= piv;
                }
            }
            let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let f = self.t[i * cols + q];
                if f != 0.0 {
                    let row = &mut self.t[i * cols..(i + 1) * cols];
                    for (v, &p) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                    row[q] = 0.0;
                }
            }
            let f = self.reduced[q];
            if f != 0.0 {
                for (d, &p) in self.reduced.iter_mut().zip(&pivot_row) {
                    *d -= f * p;
                }
            }
            self.reduced[q] = 0.0;
        }
    }
}
