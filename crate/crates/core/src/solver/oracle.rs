//! Exhaustive oracles over all `2^p` binary assignments.

use super::{complete_assignment, BnbResult, BnbStatus};
use crate::instances::MilpInstance;
use crate::{Error, Result};

pub const BRUTE_FORCE_MAX_P: usize = 22;
pub const ENERGY_MAX_P: usize = 16;

fn bits_of(mask: u64, p: usize) -> Vec<u8> {
    (0..p).map(|j| ((mask >> j) & 1) as u8).collect()
}

/// Exact optimum by enumeration; the residual LP over continuous variables is
/// solved for each assignment when there are any. Ties keep the first
/// assignment in mask order.
pub fn brute_force(inst: &MilpInstance) -> Result<BnbResult> {
    let p = inst.p;
    if p > BRUTE_FORCE_MAX_P {
        return Err(Error::TooLarge { p, limit: BRUTE_FORCE_MAX_P });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let total = 1u64 << p;
    for mask in 0..total {
        let bits = bits_of(mask, p);
        if let Some((x, obj)) = complete_assignment(inst, &bits, None)? {
            if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                best = Some((x, obj));
            }
        }
    }
    let nodes = total as usize;
    Ok(match best {
        Some((x, obj)) => BnbResult {
            status: BnbStatus::Optimal,
            incumbent: Some(x),
            objective: obj,
            nodes_explored: nodes,
            best_bound: obj,
            proof_gap: 0.0,
            trajectory: vec![(nodes, obj)],
        },
        None => BnbResult {
            status: BnbStatus::Infeasible,
            incumbent: None,
            objective: f64::INFINITY,
            nodes_explored: nodes,
            best_bound: f64::INFINITY,
            proof_gap: f64::INFINITY,
            trajectory: Vec::new(),
        },
    })
}

/// Boltzmann distribution `p(x) ∝ exp(-c'x)` over feasible assignments of a
/// pure-binary instance, indexed by bitmask (bit `j` is `x_j`).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDistribution {
    pub p: usize,
    pub probs: Vec<f64>,
}

impl EnergyDistribution {
    pub fn prob(&self, x: &[u8]) -> f64 {
        let mask = x.iter().enumerate().fold(0usize, |m, (j, &b)| m | ((b as usize & 1) << j));
        self.probs[mask]
    }

    pub fn argmax(&self) -> Vec<u8> {
        let mut best = 0;
        for (k, &v) in self.probs.iter().enumerate() {
            if v > self.probs[best] {
                best = k;
            }
        }
        bits_of(best as u64, self.p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<u8>, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(k, &v)| (bits_of(k as u64, self.p), v))
    }
}

pub fn energy_distribution(inst: &MilpInstance) -> Result<EnergyDistribution> {
    let p = inst.p;
    if p > ENERGY_MAX_P {
        return Err(Error::TooLarge { p, limit: ENERGY_MAX_P });
    }
    if !inst.is_pure_binary() {
        return Err(Error::Argument("energy distribution requires an all-binary instance".into()));
    }
    let total = 1usize << p;
    let mut energy = vec![f64::INFINITY; total];
    for (mask, e) in energy.iter_mut().enumerate() {
        let bits = bits_of(mask as u64, p);
        if let Some((_, obj)) = complete_assignment(inst, &bits, None)? {
            *e = obj;
        }
    }
    let emin = energy.iter().copied().fold(f64::INFINITY, f64::min);
    if emin == f64::INFINITY {
        return Err(Error::Infeasible(format!("`{}` has no feasible assignment", inst.name)));
    }
    let mut probs: Vec<f64> = energy.iter().map(|&e| (-(e - emin)).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= z);
    Ok(EnergyDistribution { p, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{knapsack_from, Row, RowSense};

    #[test]
    fn knapsack_brute_force() {
        let inst = knapsack_from("kp", &[10.0, 6.0, 4.0], &[5.0, 4.0, 3.0], 10.0).unwrap();
        let r = brute_force(&inst).unwrap();
        assert_eq!(r.objective, -16.0);
        assert_eq!(r.incumbent.unwrap(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn infeasible_row() {
        let inst = MilpInstance::binary(
            "bad",
            "test",
            false,
            vec![1.0],
            vec![Row::new(vec![0], vec![1.0], RowSense::Le, -1.0)],
        )
        .unwrap();
        assert_eq!(brute_force(&inst).unwrap().status, BnbStatus::Infeasible);
        assert!(energy_distribution(&inst).is_err());
    }

    #[test]
    fn refuses_large_p() {
        let inst = MilpInstance::binary("big", "test", false, vec![1.0; 23], vec![]).unwrap();
        assert!(matches!(brute_force(&inst), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn mixed_instance_solves_residual_lp() {
        // min -x0 - y, y <= 2.5 x0, y in [0, 10]; best x0 = 1, y = 2.5
        let inst = MilpInstance::new(
            "mix",
            "test",
            false,
            1,
            vec![-1.0, -1.0],
            vec![Row::new(vec![0, 1], vec![-2.5, 1.0], RowSense::Le, 0.0)],
            vec![0.0, 0.0],
            vec![1.0, 10.0],
        )
        .unwrap();
        let r = brute_force(&inst).unwrap();
        assert!((r.objective + 3.5).abs() < 1e-9);
    }

    #[test]
    fn single_binary_energy() {
        let inst = MilpInstance::binary("e", "test", false, vec![-1.0], vec![]).unwrap();
        let d = energy_distribution(&inst).unwrap();
        let e = std::f64::consts::E;
        assert!((d.prob(&[1]) - e / (1.0 + e)).abs() < 1e-15);
        assert!((d.prob(&[1]) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn symmetric_points_equal_and_infeasible_zero() {
        let inst = MilpInstance::binary(
            "s",
            "test",
            false,
            vec![-1.0, -1.0],
            vec![Row::new(vec![0, 1], vec![1.0, 1.0], RowSense::Le, 1.0)],
        )
        .unwrap();
        let d = energy_distribution(&inst).unwrap();
        assert_eq!(d.prob(&[1, 0]), d.prob(&[0, 1]));
        assert_eq!(d.prob(&[1, 1]), 0.0);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
