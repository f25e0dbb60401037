//! Line-oriented instance text format (version 1):
//!
//! ```text
//! milp 1
//! name <name>
//! domain <tag>
//! sense min|max
//! dims <n> <m> <p>
//! obj <c_0> ... <c_{n-1}>
//! rows
//! <LE|GE|EQ> <rhs> <k> <idx>:<coef> ...      (m lines)
//! bounds
//! <lb> <ub>                                  (n lines)
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `read(write(x)) == x` bit-exactly. `GE` rows are accepted on read and
//! canonicalized to `LE` by negation. `sense max` means the stored objective
//! is already negated.

use std::fmt::Write as _;
use std::path::Path;

use super::{MilpInstance, Row, RowSense};
use crate::{Error, Result};

pub fn render_instance(inst: &MilpInstance) -> String {
    let mut s = String::new();
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "milp 1");
    let _ = writeln!(s, "name {}", inst.name);
    let _ = writeln!(s, "domain {}", inst.domain_tag);
    let _ = writeln!(s, "sense {}", if inst.maximize { "max" } else { "min" });
    let _ = writeln!(s, "dims {} {} {}", inst.n, inst.m, inst.p);
    let _ = writeln!(s, "obj {}", join(&inst.c));
    let _ = writeln!(s, "rows");
    for row in &inst.rows {
        let _ = write!(s, "{} {} {}", row.sense.token(), row.rhs, row.len());
        for (j, a) in row.indices.iter().zip(&row.coefs) {
            let _ = write!(s, " {j}:{a}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "bounds");
    for (l, u) in inst.lb.iter().zip(&inst.ub) {
        let _ = writeln!(s, "{l} {u}");
    }
    let _ = writeln!(s, "end");
    s
}

pub fn write_instance(inst: &MilpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_instance(inst)).map_err(|e| Error::io(path, e))
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<MilpInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, field: &str) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.last = i + 1;
                    let l = l.trim();
                    if !l.is_empty() && !l.starts_with('#') {
                        return Ok((i + 1, l));
                    }
                }
                None => return Err(Error::parse(self.last + 1, field, "unexpected end of file")),
            }
        }
    }

    fn keyword(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (ln, l) = self.next(key)?;
        let (head, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        if head != key {
            return Err(Error::parse(ln, key, format!("expected `{key}`, found `{head}`")));
        }
        Ok((ln, rest.trim()))
    }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, field: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, field, format!("cannot parse `{tok}`")))
}

pub fn parse_instance(text: &str) -> Result<MilpInstance> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };

    let (ln, version) = lines.keyword("milp")?;
    if version != "1" {
        return Err(Error::parse(ln, "milp", format!("unsupported version `{version}`")));
    }
    let (_, name) = lines.keyword("name")?;
    let (_, domain) = lines.keyword("domain")?;
    let (ln, sense) = lines.keyword("sense")?;
    let maximize = match sense {
        "min" => false,
        "max" => true,
        other => return Err(Error::parse(ln, "sense", format!("expected min|max, found `{other}`"))),
    };
    let (ln, dims) = lines.keyword("dims")?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(Error::parse(ln, "dims", "expected `n m p`"));
    }
    let n: usize = num(dims[0], ln, "dims.n")?;
    let m: usize = num(dims[1], ln, "dims.m")?;
    let p: usize = num(dims[2], ln, "dims.p")?;
    if p > n {
        return Err(Error::parse(ln, "dims.p", format!("p = {p} exceeds n = {n}")));
    }

    let (ln, obj) = lines.keyword("obj")?;
    let c = obj
        .split_whitespace()
        .map(|t| num::<f64>(t, ln, "obj"))
        .collect::<Result<Vec<_>>>()?;
    if c.len() != n {
        return Err(Error::parse(ln, "obj", format!("expected {n} coefficients, found {}", c.len())));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(ln, "obj", "coefficients must be finite"));
    }

    lines.keyword("rows")?;
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines.next("row")?;
        let mut toks = l.split_whitespace();
        let sense = match toks.next() {
            Some("LE") => RowSense::Le,
            Some("GE") => RowSense::Ge,
            Some("EQ") => RowSense::Eq,
            Some(t) => return Err(Error::parse(ln, "row.sense", format!("expected LE|GE|EQ, found `{t}`"))),
            None => return Err(Error::parse(ln, "row.sense", "missing")),
        };
        let rhs: f64 = num(toks.next().unwrap_or(""), ln, "row.rhs")?;
        if !rhs.is_finite() {
            return Err(Error::parse(ln, "row.rhs", "must be finite"));
        }
        let k: usize = num(toks.next().unwrap_or(""), ln, "row.k")?;
        let mut indices = Vec::with_capacity(k);
        let mut coefs = Vec::with_capacity(k);
        for tok in toks {
            let (i, a) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(ln, "row.entry", format!("expected idx:coef, found `{tok}`")))?;
            let j: usize = num(i, ln, "row.idx")?;
            let a: f64 = num(a, ln, "row.coef")?;
            if j >= n {
                return Err(Error::parse(ln, "row.idx", format!("index {j} out of range (n = {n})")));
            }
            if !a.is_finite() || a == 0.0 {
                return Err(Error::parse(ln, "row.coef", format!("coefficient `{a}` must be finite and nonzero")));
            }
            if indices.contains(&j) {
                return Err(Error::parse(ln, "row.idx", format!("duplicate index {j}")));
            }
            indices.push(j);
            coefs.push(a);
        }
        if indices.len() != k {
            return Err(Error::parse(ln, "row.k", format!("declared {k} entries, found {}", indices.len())));
        }
        rows.push(Row::new(indices, coefs, sense, rhs));
    }

    lines.keyword("bounds")?;
    let mut lb = Vec::with_capacity(n);
    let mut ub = Vec::with_capacity(n);
    for j in 0..n {
        let (ln, l) = lines.next("bounds")?;
        let mut toks = l.split_whitespace();
        let lo: f64 = num(toks.next().unwrap_or(""), ln, "bounds.lb")?;
        let hi: f64 = num(toks.next().unwrap_or(""), ln, "bounds.ub")?;
        if toks.next().is_some() {
            return Err(Error::parse(ln, "bounds", "expected exactly two values"));
        }
        if j < p && (lo != 0.0 || hi != 1.0) {
            return Err(Error::parse(ln, "bounds", format!("binary variable {j} must have bounds 0 1")));
        }
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::parse(ln, "bounds", format!("invalid bounds [{lo}, {hi}]")));
        }
        lb.push(lo);
        ub.push(hi);
    }
    lines.keyword("end")?;

    MilpInstance::new(name, domain, maximize, p, c, rows, lb, ub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate, Family, GeneratorConfig, Sense};

    const SMALL: &str = "milp 1\nname t\ndomain test\nsense min\ndims 2 1 2\nobj 1 2\nrows\nGE 1 2 0:1 1:3\nbounds\n0 1\n0 1\nend\n";

    #[test]
    fn ge_token_canonicalized() {
        let inst = parse_instance(SMALL).unwrap();
        let row = &inst.rows[0];
        assert_eq!(row.sense, Sense::Le);
        assert_eq!(row.coefs, vec![-1.0, -3.0]);
        assert_eq!(row.rhs, -1.0);
    }

    #[test]
    fn index_out_of_range_is_parse_error() {
        let text = SMALL.replace("1:3", "2:3");
        match parse_instance(&text) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 8);
                assert_eq!(field, "row.idx");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_file_names_field() {
        let text = SMALL.replace("end\n", "");
        assert!(matches!(parse_instance(&text), Err(Error::Parse { ref field, .. }) if field == "end"));
    }

    #[test]
    fn bad_count_rejected() {
        let text = SMALL.replace("GE 1 2", "GE 1 3");
        assert!(matches!(parse_instance(&text), Err(Error::Parse { ref field, .. }) if field == "row.k"));
    }

    #[test]
    fn round_trip_generated() {
        for family in Family::ALL {
            let inst = generate(&GeneratorConfig::new(family, 9)).unwrap();
            let text = render_instance(&inst);
            let back = parse_instance(&text).unwrap();
            assert_eq!(back, inst);
            assert_eq!(render_instance(&back), text);
        }
    }

    #[test]
    fn infinite_continuous_bounds_round_trip() {
        let inst = MilpInstance::new(
            "inf",
            "test",
            false,
            1,
            vec![1.0, -0.1],
            vec![Row::new(vec![0, 1], vec![0.3, 1e-3], RowSense::Eq, 0.7)],
            vec![0.0, f64::NEG_INFINITY],
            vec![1.0, f64::INFINITY],
        )
        .unwrap();
        assert_eq!(parse_instance(&render_instance(&inst)).unwrap(), inst);
    }
}
