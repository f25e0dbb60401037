//! Bipartite variable/constraint graph with fixed feature schemas.
//!
//! Variable features (6): normalized objective, mean coefficient, degree,
//! max coefficient, min coefficient, is-integer.
//! Constraint features (4): mean row coefficient, degree, normalized rhs,
//! sense code (0 = LE, 1 = EQ).
//! Edge features (1): the raw constraint coefficient.

use std::fmt::Write as _;

use crate::instances::{MilpInstance, Sense};

pub const VAR_FEATURES: usize = 6;
pub const CON_FEATURES: usize = 4;
pub const EDGE_FEATURES: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub con: usize,
    pub var: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub var_features: Vec<[f64; VAR_FEATURES]>,
    pub con_features: Vec<[f64; CON_FEATURES]>,
    /// Row-major: edges of constraint 0 first, in the row's index order.
    pub edges: Vec<Edge>,
}

pub fn encode(inst: &MilpInstance) -> BipartiteGraph {
    let obj_scale = inst.c.iter().fold(1.0_f64, |acc, c| acc.max(c.abs()));

    let mut sum = vec![0.0; inst.n];
    let mut deg = vec![0usize; inst.n];
    let mut max = vec![f64::NEG_INFINITY; inst.n];
    let mut min = vec![f64::INFINITY; inst.n];
    let mut edges = Vec::with_capacity(inst.nnz());
    let mut con_features = Vec::with_capacity(inst.m);

    for (i, row) in inst.rows.iter().enumerate() {
        let mut row_scale = 1.0_f64;
        for (&j, &a) in row.indices.iter().zip(&row.coefs) {
            sum[j] += a;
            deg[j] += 1;
            max[j] = max[j].max(a);
            min[j] = min[j].min(a);
            row_scale = row_scale.max(a.abs());
            edges.push(Edge { con: i, var: j, coef: a });
        }
        let k = row.len();
        let mean = if k == 0 { 0.0 } else { row.coefs.iter().sum::<f64>() / k as f64 };
        let sense = match row.sense {
            Sense::Le => 0.0,
            Sense::Eq => 1.0,
        };
        con_features.push([mean, k as f64, row.rhs / row_scale, sense]);
    }

    let var_features = (0..inst.n)
        .map(|j| {
            let (mean, hi, lo) = if deg[j] == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (sum[j] / deg[j] as f64, max[j], min[j])
            };
            let integer = if j < inst.p { 1.0 } else { 0.0 };
            [inst.c[j] / obj_scale, mean, deg[j] as f64, hi, lo, integer]
        })
        .collect();

    BipartiteGraph {
        n: inst.n,
        m: inst.m,
        p: inst.p,
        var_features,
        con_features,
        edges,
    }
}

impl BipartiteGraph {
    pub fn edge_cons(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.con).collect()
    }

    pub fn edge_vars(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.var).collect()
    }

    /// Feature dump: one section per node type, `kind,index,f0,f1,...`.
    pub fn features_csv(&self) -> String {
        let mut s = String::from("kind,index,f0,f1,f2,f3,f4,f5\n");
        for (j, f) in self.var_features.iter().enumerate() {
            let _ = writeln!(s, "var,{j},{},{},{},{},{},{}", f[0], f[1], f[2], f[3], f[4], f[5]);
        }
        for (i, f) in self.con_features.iter().enumerate() {
            let _ = writeln!(s, "con,{i},{},{},{},{},,", f[0], f[1], f[2], f[3]);
        }
        for e in &self.edges {
            let _ = writeln!(s, "edge,{}-{},{},,,,,", e.con, e.var, e.coef);
        }
        s
    }
}
