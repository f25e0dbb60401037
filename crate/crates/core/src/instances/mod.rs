//! MILP data model, seeded family generators, and the on-disk text format.
//!
//! Instances are always stored in minimization form over
//! `min c'x  s.t.  A x (<=|=) b,  lb <= x <= ub`, with the binary variables
//! occupying indices `0..p`. Families that maximize store `-c` and set
//! [`MilpInstance::maximize`] so objectives can be reported in their original
//! sense.

mod format;
mod generate;

pub use format::{read_instance, write_instance, parse_instance, render_instance};
pub use generate::{generate, knapsack_from, Family, FamilyParams, GeneratorConfig};

use crate::{Error, Result};

/// Stored constraint sense. `>=` rows are negated into `<=` at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
}

impl Sense {
    pub fn token(self) -> &'static str {
        match self {
            Sense::Le => "LE",
            Sense::Eq => "EQ",
        }
    }
}

/// Sense as written by a caller or in a file, before canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub indices: Vec<usize>,
    pub coefs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    /// Builds a canonical row, negating `>=` rows into `<=` form.
    pub fn new(indices: Vec<usize>, coefs: Vec<f64>, sense: RowSense, rhs: f64) -> Self {
        match sense {
            RowSense::Le => Row { indices, coefs, sense: Sense::Le, rhs },
            RowSense::Eq => Row { indices, coefs, sense: Sense::Eq, rhs },
            RowSense::Ge => Row {
                indices,
                coefs: coefs.into_iter().map(|a| -a).collect(),
                sense: Sense::Le,
                rhs: -rhs,
            },
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.coefs)
            .map(|(&j, &a)| a * x[j])
            .sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => act <= self.rhs + tol,
            Sense::Eq => (act - self.rhs).abs() <= tol,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub name: String,
    pub domain_tag: String,
    /// Original objective sense; `c` is already negated when true.
    pub maximize: bool,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub c: Vec<f64>,
    pub rows: Vec<Row>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl MilpInstance {
    /// Validates and builds an instance. Bounds of binary variables are forced
    /// to `[0, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        domain_tag: impl Into<String>,
        maximize: bool,
        p: usize,
        c: Vec<f64>,
        rows: Vec<Row>,
        mut lb: Vec<f64>,
        mut ub: Vec<f64>,
    ) -> Result<Self> {
        let n = c.len();
        if lb.len() != n || ub.len() != n {
            return Err(Error::InvalidInstance(format!(
                "bound vectors have lengths {}/{} but n = {n}",
                lb.len(),
                ub.len()
            )));
        }
        for j in 0..p.min(n) {
            lb[j] = 0.0;
            ub[j] = 1.0;
        }
        let inst = MilpInstance {
            name: name.into(),
            domain_tag: domain_tag.into(),
            maximize,
            n,
            m: rows.len(),
            p,
            c,
            rows,
            lb,
            ub,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Pure-binary instance with all variables in `[0,1]`.
    pub fn binary(
        name: impl Into<String>,
        domain_tag: impl Into<String>,
        maximize: bool,
        c: Vec<f64>,
        rows: Vec<Row>,
    ) -> Result<Self> {
        let n = c.len();
        Self::new(name, domain_tag, maximize, n, c, rows, vec![0.0; n], vec![1.0; n])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if self.p > self.n {
            return bad(format!("p = {} exceeds n = {}", self.p, self.n));
        }
        if self.c.len() != self.n || self.lb.len() != self.n || self.ub.len() != self.n {
            return bad("vector lengths disagree with n".into());
        }
        if self.m != self.rows.len() {
            return bad(format!("m = {} but {} rows stored", self.m, self.rows.len()));
        }
        if let Some(j) = self.c.iter().position(|v| !v.is_finite()) {
            return bad(format!("objective coefficient {j} is not finite"));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.indices.len() != row.coefs.len() {
                return bad(format!("row {i}: index/coefficient length mismatch"));
            }
            if !row.rhs.is_finite() {
                return bad(format!("row {i}: rhs is not finite"));
            }
            let mut seen = std::collections::HashSet::with_capacity(row.len());
            for (&j, &a) in row.indices.iter().zip(&row.coefs) {
                if j >= self.n {
                    return bad(format!("row {i}: index {j} out of range (n = {})", self.n));
                }
                if !a.is_finite() || a == 0.0 {
                    return bad(format!("row {i}: coefficient of x{j} must be finite and nonzero"));
                }
                if !seen.insert(j) {
                    return bad(format!("row {i}: duplicate index {j}"));
                }
            }
        }
        for j in 0..self.n {
            let (l, u) = (self.lb[j], self.ub[j]);
            if j < self.p {
                if l != 0.0 || u != 1.0 {
                    return bad(format!("binary variable {j} must have bounds [0,1]"));
                }
            } else if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("variable {j} has invalid bounds [{l}, {u}]"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Objective in the instance's original sense.
    pub fn reported_objective(&self, internal: f64) -> f64 {
        if self.maximize {
            -internal
        } else {
            internal
        }
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.n {
            return false;
        }
        for j in 0..self.n {
            if x[j] < self.lb[j] - tol || x[j] > self.ub[j] + tol {
                return false;
            }
            if j < self.p && x[j] != 0.0 && x[j] != 1.0 {
                return false;
            }
        }
        self.rows.iter().all(|r| r.is_satisfied(x, tol))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Row::len).sum()
    }

    pub fn is_pure_binary(&self) -> bool {
        self.p == self.n
    }
}
