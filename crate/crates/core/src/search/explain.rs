use std::fmt::Write as _;

use rayon::prelude::*;

use crate::graph::encode;
use crate::instances::MilpInstance;
use crate::model::RomeModel;
use crate::Result;

/// Routing diagnostics of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainRow {
    pub instance: String,
    pub domain: String,
    /// Index of the largest encoder gate weight (lowest index on ties).
    pub argmax_expert: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub h_g: Vec<f64>,
}

pub fn explain(model: &RomeModel, instances: &[MilpInstance]) -> Result<Vec<ExplainRow>> {
    instances
        .par_iter()
        .map(|inst| {
            let out = model.forward(&encode(inst))?;
            let mut argmax_expert = 0;
            for (m, &a) in out.alpha.iter().enumerate() {
                if a > out.alpha[argmax_expert] {
                    argmax_expert = m;
                }
            }
            Ok(ExplainRow {
                instance: inst.name.clone(),
                domain: inst.domain_tag.clone(),
                argmax_expert,
                alpha: out.alpha,
                beta: out.beta,
                h_g: out.h_g,
            })
        })
        .collect()
}

fn numbered(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!(",{prefix}{i}")).collect()
}

fn values(v: &[f64]) -> String {
    v.iter().map(|x| format!(",{x}")).collect()
}

/// `instance,domain,argmax_expert,alpha0..,beta0..`
pub fn render_activation_csv(rows: &[ExplainRow]) -> String {
    let (m, h) = rows.first().map_or((0, 0), |r| (r.alpha.len(), r.beta.len()));
    let mut s = format!("# rome-activation v1\ninstance,domain,argmax_expert{}{}\n", numbered("alpha", m), numbered("beta", h));
    for r in rows {
        let _ = writeln!(s, "{},{},{}{}{}", r.instance, r.domain, r.argmax_expert, values(&r.alpha), values(&r.beta));
    }
    s
}

/// `instance,domain,h0..h{d-1}`: raw task embedding coordinates.
pub fn render_embedding_csv(rows: &[ExplainRow]) -> String {
    let d = rows.first().map_or(0, |r| r.h_g.len());
    let mut s = format!("# rome-embedding v1\ninstance,domain{}\n", numbered("h", d));
    for r in rows {
        let _ = writeln!(s, "{},{}{}", r.instance, r.domain, values(&r.h_g));
    }
    s
}
