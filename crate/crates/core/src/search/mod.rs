//! Inference: predicted marginals drive a trust-region sub-MILP; plus the
//! evaluation harness and routing exports.

mod eval;
mod explain;

pub use eval::{
    evaluate_suite, render_eval_csv, render_summary_csv, render_trajectory_csv, write_report, EvalInstance,
    EvalReport, EvalRow, Method, MethodSummary, TrajectoryPoint,
};
pub use explain::{explain, render_activation_csv, render_embedding_csv, ExplainRow};

use std::str::FromStr;

use crate::graph::encode;
use crate::instances::MilpInstance;
use crate::model::{ForwardOutput, RomeModel};
use crate::solver::{
    branch_and_bound, trust_region_setup, BnbResult, BnbStatus, Fixings, Limits, TrustRegion,
};
use crate::{Error, Result};

/// Concrete fixing counts and radius for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub k0: usize,
    pub k1: usize,
    pub delta: f64,
    pub limits: Limits,
}

impl SearchParams {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k0 + self.k1 > p {
            return Err(Error::Argument(format!("k0 + k1 = {} exceeds p = {p}", self.k0 + self.k1)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Argument(format!("trust radius must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// `(k0, k1, Δ)` as fractions of the binary count, so one setting serves
/// instances of different sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchFractions {
    pub k0: f64,
    pub k1: f64,
    pub delta: f64,
}

impl Default for SearchFractions {
    fn default() -> Self {
        SearchFractions { k0: 0.3, k1: 0.2, delta: 0.05 }
    }
}

impl SearchFractions {
    pub fn new(k0: f64, k1: f64, delta: f64) -> Result<Self> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(k0) || !ok(k1) || !ok(delta) || k0 + k1 > 1.0 {
            return Err(Error::Argument(format!(
                "fractions must lie in [0, 1] with k0 + k1 <= 1, got ({k0}, {k1}, {delta})"
            )));
        }
        Ok(SearchFractions { k0, k1, delta })
    }

    /// Rounds each fraction of `p` to the nearest integer.
    pub fn params_for(&self, p: usize, limits: &Limits) -> SearchParams {
        let k0 = ((self.k0 * p as f64).round() as usize).min(p);
        let k1 = ((self.k1 * p as f64).round() as usize).min(p - k0);
        SearchParams { k0, k1, delta: (self.delta * p as f64).round(), limits: limits.clone() }
    }
}

impl FromStr for SearchFractions {
    type Err = Error;

    /// `k0,k1,delta`, e.g. `0.3,0.2,0.05`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Argument(format!("expected k0,k1,delta fractions, got `{s}`")))?;
        match parts[..] {
            [a, b, c] => SearchFractions::new(a, b, c),
            _ => Err(Error::Argument(format!("expected k0,k1,delta fractions, got `{s}`"))),
        }
    }
}

/// One sub-MILP solve inside [`predict_and_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    /// `None` for the final unrestricted solve.
    pub delta: Option<f64>,
    pub status: BnbStatus,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Result of the last attempt, with node count and trajectory summed and
    /// offset over all attempts.
    pub result: BnbResult,
    pub attempts: Vec<Attempt>,
    pub forward: ForwardOutput,
}

impl SearchOutcome {
    pub fn fallbacks(&self) -> usize {
        self.attempts.len() - 1
    }
}

const MAX_DOUBLINGS: usize = 3;

/// Solves the trust region around given marginals, widening it when it is
/// proven infeasible: the radius doubles up to three times, then fixings and
/// ball are dropped. All attempts share `params.limits.node_cap`.
pub fn search_with_marginals(
    inst: &MilpInstance,
    marginals: &[f64],
    params: &SearchParams,
) -> Result<(BnbResult, Vec<Attempt>)> {
    params.validate(inst.p)?;
    if marginals.len() != inst.p {
        return Err(Error::Argument(format!("marginals have length {} but p = {}", marginals.len(), inst.p)));
    }
    let (fixings, base) = trust_region_setup(marginals, params.k0, params.k1, params.delta)?;
    let budget = params.limits.node_cap;
    let mut used = 0usize;
    let mut attempts = Vec::new();
    let mut trajectory = Vec::new();
    let mut delta = params.delta;
    let mut stage = 0;
    loop {
        let mut limits = params.limits.clone();
        limits.node_cap = budget - used;
        let restricted = stage <= MAX_DOUBLINGS;
        let res = if restricted {
            let trust = TrustRegion::new(base.center.clone(), delta)?;
            branch_and_bound(inst, &fixings, Some(&trust), &limits)?
        } else {
            branch_and_bound(inst, &Fixings::none(inst.p), None, &limits)?
        };
        trajectory.extend(res.trajectory.iter().map(|&(n, o)| (n + used, o)));
        used += res.nodes_explored;
        attempts.push(Attempt { delta: restricted.then_some(delta), status: res.status, nodes: res.nodes_explored });
        let retry = res.status == BnbStatus::Infeasible && restricted && used < budget;
        if !retry {
            let result = BnbResult { nodes_explored: used, trajectory, ..res };
            return Ok((result, attempts));
        }
        stage += 1;
        if stage <= MAX_DOUBLINGS {
            delta = (2.0 * delta).max(1.0);
            log::info!("{}: trust region infeasible, retrying with radius {delta}", inst.name);
        } else {
            log::info!("{}: trust region infeasible, falling back to the full problem", inst.name);
        }
    }
}

/// Encode, predict, then search around the prediction.
pub fn predict_and_search(model: &RomeModel, inst: &MilpInstance, params: &SearchParams) -> Result<SearchOutcome> {
    let forward = model.forward(&encode(inst))?;
    let (result, attempts) = search_with_marginals(inst, &forward.marginals, params)?;
    Ok(SearchOutcome { result, attempts, forward })
}

/// Best known solution value (internal minimization form) from a full solve.
pub fn compute_bks(inst: &MilpInstance, limits: &Limits) -> Result<f64> {
    let res = branch_and_bound(inst, &Fixings::none(inst.p), None, limits)?;
    if !res.has_solution() {
        return Err(Error::Infeasible(format!("{}: no feasible solution found", inst.name)));
    }
    Ok(res.objective)
}

#[cfg(test)]
mod tests;
