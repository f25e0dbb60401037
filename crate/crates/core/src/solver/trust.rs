use super::{branch_and_bound, BnbResult, Fixings, Limits, TrustRegion};
use crate::instances::MilpInstance;
use crate::{Error, Result};

/// Chooses the hard fixings and the ball for a prediction `marginals`.
///
/// The `k0` variables with the smallest marginals are fixed to 0 first
/// (ties to the lower index); the `k1` largest among the rest are fixed to 1.
/// The ball of radius `delta` is centered at the rounded marginals and covers
/// only the variables left free.
pub fn trust_region_setup(
    marginals: &[f64],
    k0: usize,
    k1: usize,
    delta: f64,
) -> Result<(Fixings, TrustRegion)> {
    let p = marginals.len();
    if k0 + k1 > p {
        return Err(Error::Argument(format!("k0 + k1 = {} exceeds p = {p}", k0 + k1)));
    }
    if marginals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("marginals must be finite".into()));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| marginals[a].total_cmp(&marginals[b]).then(a.cmp(&b)));
    let mut fixings = Fixings::none(p);
    for &j in &order[..k0] {
        fixings.fix(j, 0)?;
    }
    let mut rest: Vec<usize> = order[k0..].to_vec();
    rest.sort_by(|&a, &b| marginals[b].total_cmp(&marginals[a]).then(a.cmp(&b)));
    for &j in &rest[..k1] {
        fixings.fix(j, 1)?;
    }
    let trust = TrustRegion::new(marginals.to_vec(), delta)?;
    Ok((fixings, trust))
}

/// Predict-and-search sub-problem: hard fixings plus an L1 ball, solved by
/// branch-and-bound.
pub fn solve_trust_region(
    inst: &MilpInstance,
    marginals: &[f64],
    k0: usize,
    k1: usize,
    delta: f64,
    limits: &Limits,
) -> Result<BnbResult> {
    if marginals.len() != inst.p {
        return Err(Error::Argument(format!(
            "marginals have length {} but p = {}",
            marginals.len(),
            inst.p
        )));
    }
    let (fixings, trust) = trust_region_setup(marginals, k0, k1, delta)?;
    branch_and_bound(inst, &fixings, Some(&trust), limits)
}
