//! Best-first branch-and-bound over the binary variables.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use super::{complete_assignment, fixed_bounds, lp, Fixings, LpStatus, TrustRegion, TOL_OPT};
use crate::instances::{MilpInstance, Row};
use crate::{Error, Result};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    /// Maximum number of LP-solved nodes.
    pub node_cap: usize,
    pub time_cap: Option<Duration>,
    pub tol_opt: f64,
    /// Try nearest/floor/ceil rounding of each fractional node LP.
    pub rounding: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { node_cap: 1_000_000, time_cap: None, tol_opt: TOL_OPT, rounding: true }
    }
}

impl Limits {
    pub fn nodes(node_cap: usize) -> Self {
        Limits { node_cap, ..Limits::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Feasible,
    Infeasible,
    LimitReached,
}

impl BnbStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BnbStatus::Optimal => "optimal",
            BnbStatus::Feasible => "feasible",
            BnbStatus::Infeasible => "infeasible",
            BnbStatus::LimitReached => "limit_reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Binary entries are exactly 0.0 or 1.0.
    pub incumbent: Option<Vec<f64>>,
    /// `+inf` when there is no incumbent.
    pub objective: f64,
    pub nodes_explored: usize,
    pub best_bound: f64,
    pub proof_gap: f64,
    /// `(nodes explored when found, objective)` for every improving incumbent.
    pub trajectory: Vec<(usize, f64)>,
}

impl BnbResult {
    pub fn has_solution(&self) -> bool {
        self.incumbent.is_some()
    }
}

pub fn branch_and_bound(
    inst: &MilpInstance,
    fixings: &Fixings,
    trust: Option<&TrustRegion>,
    limits: &Limits,
) -> Result<BnbResult> {
    Ok(Search::new(inst, fixings, trust, limits, None)?.run()?.0)
}

/// Like [`branch_and_bound`] but reports every feasible solution the search
/// encounters to `observer` as `(binary part, full x, objective)`.
pub fn branch_and_bound_with(
    inst: &MilpInstance,
    fixings: &Fixings,
    trust: Option<&TrustRegion>,
    limits: &Limits,
    observer: &mut dyn FnMut(&[u8], &[f64], f64),
) -> Result<BnbResult> {
    let mut search = Search::new(inst, fixings, trust, limits, None)?;
    search.observer = Some(observer);
    Ok(search.run()?.0)
}

/// Collects up to `capacity` best distinct binary assignments. Pruning is
/// against the worst pooled objective once the pool is full, and integral
/// nodes keep branching on free variables so alternative solutions in the
/// same subtree are enumerated.
pub(crate) fn enumerate_best(
    inst: &MilpInstance,
    limits: &Limits,
    capacity: usize,
) -> Result<(BnbResult, Vec<(Vec<u8>, Vec<f64>, f64)>)> {
    let fixings = Fixings::none(inst.p);
    let search = Search::new(inst, &fixings, None, limits, Some(capacity))?;
    search.run()
}

#[derive(Debug)]
struct Node {
    bound: f64,
    seq: u64,
    fix: Vec<i8>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smaller bound first, then newest node first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.seq.cmp(&other.seq))
    }
}

struct Search<'a> {
    inst: &'a MilpInstance,
    limits: &'a Limits,
    ball: Option<Row>,
    root_fix: Vec<i8>,
    base_lo: Vec<f64>,
    base_hi: Vec<f64>,
    incumbent: Option<(Vec<f64>, f64)>,
    trajectory: Vec<(usize, f64)>,
    nodes: usize,
    pool_cap: Option<usize>,
    pool: Vec<(Vec<u8>, Vec<f64>, f64)>,
    seen: HashSet<Vec<u8>>,
    observer: Option<&'a mut dyn FnMut(&[u8], &[f64], f64)>,
}

impl<'a> Search<'a> {
    fn new(
        inst: &'a MilpInstance,
        fixings: &Fixings,
        trust: Option<&TrustRegion>,
        limits: &'a Limits,
        pool_cap: Option<usize>,
    ) -> Result<Self> {
        fixings.check(inst)?;
        if let Some(t) = trust {
            super::check_trust(inst, t)?;
        }
        let (base_lo, base_hi) = fixed_bounds(inst, &Fixings::none(inst.p));
        let mut root_fix = vec![-1i8; inst.p];
        for (j, v) in fixings.iter() {
            root_fix[j] = v as i8;
        }
        Ok(Search {
            inst,
            limits,
            ball: trust.and_then(|t| t.ball_row(fixings)),
            root_fix,
            base_lo,
            base_hi,
            incumbent: None,
            trajectory: Vec::new(),
            nodes: 0,
            pool_cap,
            pool: Vec::new(),
            seen: HashSet::new(),
            observer: None,
        })
    }

    fn cutoff(&self) -> f64 {
        match self.pool_cap {
            Some(cap) if self.pool.len() < cap => f64::INFINITY,
            Some(_) => self.pool.last().map_or(f64::INFINITY, |s| s.2),
            None => self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.1),
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        bound >= self.cutoff() - self.limits.tol_opt
    }

    fn offer(&mut self, bits: Vec<u8>, x: Vec<f64>, obj: f64) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&bits, &x, obj);
        }
        if let Some(cap) = self.pool_cap {
            if self.seen.insert(bits.clone()) {
                let pos = self.pool.partition_point(|s| s.2 <= obj);
                if pos < cap {
                    self.pool.insert(pos, (bits, x.clone(), obj));
                    self.pool.truncate(cap);
                }
            }
        }
        if self.incumbent.as_ref().map_or(true, |(_, best)| obj < *best) {
            self.trajectory.push((self.nodes, obj));
            self.incumbent = Some((x, obj));
        }
    }

    fn try_bits(&mut self, bits: Vec<u8>) -> Result<()> {
        if self.pool_cap.is_some() && self.seen.contains(&bits) {
            return Ok(());
        }
        if let Some((x, obj)) = complete_assignment(self.inst, &bits, self.ball.as_ref())? {
            self.offer(bits, x, obj);
        }
        Ok(())
    }

    fn out_of_budget(&self, start: Instant) -> bool {
        self.nodes >= self.limits.node_cap
            || self.limits.time_cap.is_some_and(|cap| start.elapsed() >= cap)
    }

    fn run(mut self) -> Result<(BnbResult, Vec<(Vec<u8>, Vec<f64>, f64)>)> {
        let start = Instant::now();
        let p = self.inst.p;
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Node { bound: f64::NEG_INFINITY, seq, fix: self.root_fix.clone() });
        let mut hit_limit = false;

        let mut rows: Vec<&Row> = self.inst.rows.iter().collect();
        let ball = self.ball.clone();
        rows.extend(ball.as_ref());

        while let Some(node) = heap.pop() {
            if self.prunable(node.bound) {
                continue;
            }
            if self.out_of_budget(start) {
                heap.push(node);
                hit_limit = true;
                break;
            }
            self.nodes += 1;

            let mut lo = self.base_lo.clone();
            let mut hi = self.base_hi.clone();
            for (j, &f) in node.fix.iter().enumerate() {
                if f >= 0 {
                    lo[j] = f as f64;
                    hi[j] = f as f64;
                }
            }
            let sol = lp::solve_dense(&self.inst.c, &rows, &lo, &hi)?;
            match sol.status {
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    return Err(Error::Argument(format!(
                        "LP relaxation of `{}` is unbounded",
                        self.inst.name
                    )))
                }
                LpStatus::Optimal => {}
            }
            let bound = sol.objective;
            if self.prunable(bound) {
                continue;
            }

            let mut branch_var = None;
            let mut best_frac = 0.0;
            for j in 0..p {
                let v = sol.x[j];
                let frac = (v - v.floor()).min(v.ceil() - v);
                if frac > INT_TOL && frac > best_frac {
                    best_frac = frac;
                    branch_var = Some(j);
                }
            }

            match branch_var {
                None => {
                    let bits: Vec<u8> = sol.x[..p].iter().map(|&v| u8::from(v > 0.5)).collect();
                    self.try_bits(bits)?;
                    if self.pool_cap.is_some() {
                        if let Some(j) = node.fix.iter().position(|&f| f < 0) {
                            for v in [0i8, 1] {
                                let mut fix = node.fix.clone();
                                fix[j] = v;
                                seq += 1;
                                heap.push(Node { bound, seq, fix });
                            }
                        }
                    }
                }
                Some(j) => {
                    if self.limits.rounding {
                        let frac = &sol.x[..p];
                        let candidates = [
                            frac.iter().map(|&v| u8::from(v >= 0.5)).collect::<Vec<u8>>(),
                            frac.iter().map(|&v| u8::from(v >= 1.0 - INT_TOL)).collect(),
                            frac.iter().map(|&v| u8::from(v > INT_TOL)).collect(),
                        ];
                        for (k, bits) in candidates.iter().enumerate() {
                            if candidates[..k].contains(bits) {
                                continue;
                            }
                            self.try_bits(bits.clone())?;
                        }
                    }
                    for v in [0i8, 1] {
                        let mut fix = node.fix.clone();
                        fix[j] = v;
                        seq += 1;
                        heap.push(Node { bound, seq, fix });
                    }
                }
            }
        }

        let remaining = heap
            .iter()
            .filter(|n| !self.prunable(n.bound))
            .map(|n| n.bound)
            .fold(f64::INFINITY, f64::min);
        let exhausted = !hit_limit || remaining == f64::INFINITY;
        let (incumbent, objective) = match self.incumbent.take() {
            Some((x, obj)) => (Some(x), obj),
            None => (None, f64::INFINITY),
        };
        let (status, best_bound) = match (exhausted, incumbent.is_some()) {
            (true, true) => (BnbStatus::Optimal, objective),
            (true, false) => (BnbStatus::Infeasible, f64::INFINITY),
            (false, true) => (BnbStatus::Feasible, remaining.min(objective)),
            (false, false) => (BnbStatus::LimitReached, remaining),
        };
        let proof_gap = if incumbent.is_some() { (objective - best_bound).abs() } else { f64::INFINITY };
        let result = BnbResult {
            status,
            incumbent,
            objective,
            nodes_explored: self.nodes,
            best_bound,
            proof_gap,
            trajectory: self.trajectory,
        };
        Ok((result, self.pool))
    }
}
