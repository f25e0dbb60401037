//! Exact MILP machinery: LP relaxations, best-first branch-and-bound,
//! trust-region sub-problems, solution-pool collection, and brute-force
//! oracles used to check all of the above.

mod bnb;
mod lp;
mod oracle;
mod pool;
mod trust;

pub use bnb::{branch_and_bound, branch_and_bound_with, BnbStatus, BnbResult, Limits};
pub use oracle::{brute_force, energy_distribution, EnergyDistribution, BRUTE_FORCE_MAX_P, ENERGY_MAX_P};
pub use pool::{collect_pool, collect_pool_with, pool_weights, PoolTemperature, SolutionPool};
pub use trust::{solve_trust_region, trust_region_setup};

use crate::instances::{MilpInstance, Row, RowSense};
use crate::{Error, Result};

pub const TOL_FEAS: f64 = 1e-7;
pub const TOL_OPT: f64 = 1e-6;
pub const TOL_PIVOT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn infeasible(n: usize) -> Self {
        LpSolution { status: LpStatus::Infeasible, x: vec![0.0; n], objective: f64::INFINITY }
    }
}

/// Partial 0/1 assignment over the binary variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Fixings {
    values: Vec<Option<u8>>,
}

impl Fixings {
    pub fn none(p: usize) -> Self {
        Fixings { values: vec![None; p] }
    }

    pub fn from_pairs(p: usize, pairs: &[(usize, u8)]) -> Result<Self> {
        let mut f = Fixings::none(p);
        for &(j, v) in pairs {
            f.fix(j, v)?;
        }
        Ok(f)
    }

    pub fn fix(&mut self, j: usize, v: u8) -> Result<()> {
        if j >= self.values.len() {
            return Err(Error::Argument(format!("fixing index {j} >= p = {}", self.values.len())));
        }
        if v > 1 {
            return Err(Error::Argument(format!("fixing value {v} is not 0/1")));
        }
        self.values[j] = Some(v);
        Ok(())
    }

    pub fn get(&self, j: usize) -> Option<u8> {
        self.values.get(j).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.values.iter().enumerate().filter_map(|(j, v)| v.map(|v| (j, v)))
    }

    fn check(&self, inst: &MilpInstance) -> Result<()> {
        if self.values.len() > inst.p {
            return Err(Error::Argument(format!(
                "fixings cover {} variables but p = {}",
                self.values.len(),
                inst.p
            )));
        }
        Ok(())
    }
}

/// L1 ball of radius `radius` around the binary part of `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TrustRegion {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Argument(format!("trust radius must be >= 0, got {radius}")));
        }
        Ok(TrustRegion { center, radius })
    }

    /// Center rounded at 0.5 with ties going to 0.
    pub fn rounded_center(&self) -> Vec<u8> {
        self.center.iter().map(|&v| u8::from(v > 0.5)).collect()
    }

    /// The ball as one linear row over binaries not fixed by `fixings`:
    /// `sum_{c=0} x_j - sum_{c=1} x_j <= radius - |{c=1}|`.
    /// Returns `None` when the ball contains every assignment of the free
    /// binaries (including when none are free); the row would be redundant.
    pub fn ball_row(&self, fixings: &Fixings) -> Option<Row> {
        let rounded = self.rounded_center();
        let mut idx = Vec::new();
        let mut coefs = Vec::new();
        let mut ones = 0.0;
        for (j, &c) in rounded.iter().enumerate() {
            if fixings.get(j).is_some() {
                continue;
            }
            idx.push(j);
            if c == 1 {
                coefs.push(-1.0);
                ones += 1.0;
            } else {
                coefs.push(1.0);
            }
        }
        if self.radius >= idx.len() as f64 {
            None
        } else {
            Some(Row::new(idx, coefs, RowSense::Le, self.radius - ones))
        }
    }

    /// L1 distance of the unfixed binaries of `x` from the rounded center.
    pub fn distance(&self, x: &[f64], fixings: &Fixings) -> f64 {
        self.rounded_center()
            .iter()
            .enumerate()
            .filter(|(j, _)| fixings.get(*j).is_none())
            .map(|(j, &c)| (x[j] - c as f64).abs())
            .sum()
    }
}

/// Bounds after applying fixings.
pub(crate) fn fixed_bounds(inst: &MilpInstance, fixings: &Fixings) -> (Vec<f64>, Vec<f64>) {
    let mut lo = inst.lb.clone();
    let mut hi = inst.ub.clone();
    for (j, v) in fixings.iter() {
        lo[j] = v as f64;
        hi[j] = v as f64;
    }
    (lo, hi)
}

/// LP relaxation with fixings substituted and an optional trust-region row.
pub fn solve_lp(inst: &MilpInstance, fixings: &Fixings, trust: Option<&TrustRegion>) -> Result<LpSolution> {
    fixings.check(inst)?;
    if let Some(t) = trust {
        check_trust(inst, t)?;
    }
    let (lo, hi) = fixed_bounds(inst, fixings);
    let ball = trust.and_then(|t| t.ball_row(fixings));
    let mut rows: Vec<&Row> = inst.rows.iter().collect();
    rows.extend(ball.as_ref());
    lp::solve_dense(&inst.c, &rows, &lo, &hi)
}

fn check_trust(inst: &MilpInstance, t: &TrustRegion) -> Result<()> {
    if t.center.len() != inst.p {
        return Err(Error::Argument(format!(
            "trust center has length {} but p = {}",
            t.center.len(),
            inst.p
        )));
    }
    if !(t.radius >= 0.0) {
        return Err(Error::Argument(format!("trust radius must be >= 0, got {}", t.radius)));
    }
    Ok(())
}

/// Completes a 0/1 assignment of the binaries into a full feasible point by
/// optimizing the continuous variables. `extra` rows (e.g. a trust ball) must
/// hold as well. Returns `None` if infeasible.
pub(crate) fn complete_assignment(
    inst: &MilpInstance,
    bits: &[u8],
    extra: Option<&Row>,
) -> Result<Option<(Vec<f64>, f64)>> {
    let p = inst.p;
    if inst.is_pure_binary() {
        let x: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
        let ok = inst.rows.iter().chain(extra).all(|r| r.is_satisfied(&x, TOL_FEAS));
        return Ok(ok.then(|| {
            let obj = inst.objective(&x);
            (x, obj)
        }));
    }
    let mut lo = inst.lb.clone();
    let mut hi = inst.ub.clone();
    for j in 0..p {
        lo[j] = bits[j] as f64;
        hi[j] = bits[j] as f64;
    }
    let mut rows: Vec<&Row> = inst.rows.iter().collect();
    rows.extend(extra);
    let sol = lp::solve_dense(&inst.c, &rows, &lo, &hi)?;
    match sol.status {
        LpStatus::Optimal => {
            let mut x = sol.x;
            for j in 0..p {
                x[j] = bits[j] as f64;
            }
            let obj = inst.objective(&x);
            Ok(Some((x, obj)))
        }
        // An unbounded completion has no finite optimum to report.
        LpStatus::Infeasible | LpStatus::Unbounded => Ok(None),
    }
}

/// Independent feasibility re-check used by tests and the search harness.
pub fn verify_solution(
    inst: &MilpInstance,
    x: &[f64],
    fixings: &Fixings,
    trust: Option<&TrustRegion>,
) -> bool {
    if !inst.is_feasible(x, TOL_FEAS * 10.0) {
        return false;
    }
    if fixings.iter().any(|(j, v)| x[j] != v as f64) {
        return false;
    }
    match trust {
        Some(t) => t.distance(x, fixings) <= t.radius + TOL_FEAS,
        None => true,
    }
}
