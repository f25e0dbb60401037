use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bnb::enumerate_best;
use super::{complete_assignment, Limits};
use crate::instances::MilpInstance;
use crate::{Error, Result};

/// Temperature used to turn pool objectives into weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PoolTemperature {
    /// `T = max(obj_max - obj_min, 1)` over the pool.
    #[default]
    Range,
    Fixed(f64),
}

impl FromStr for PoolTemperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "range" {
            return Ok(PoolTemperature::Range);
        }
        match s.parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(PoolTemperature::Fixed(t)),
            _ => Err(Error::Argument(format!("pool temperature must be `range` or a positive number, got `{s}`"))),
        }
    }
}

/// `w_i = exp(-(obj_i - obj_min) / T) / Z`.
pub fn pool_weights(objectives: &[f64], temperature: PoolTemperature) -> Vec<f64> {
    if objectives.is_empty() {
        return Vec::new();
    }
    let lo = objectives.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = match temperature {
        PoolTemperature::Range => (hi - lo).max(1.0),
        PoolTemperature::Fixed(t) => t,
    };
    let raw: Vec<f64> = objectives.iter().map(|&o| (-(o - lo) / t).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// The best distinct feasible assignments of an instance's binaries, with
/// objectives (minimization form) sorted ascending and normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPool {
    pub instance: String,
    pub solutions: Vec<Vec<u8>>,
    pub objectives: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    instance: String,
    objectives: Vec<f64>,
    assignments: Vec<String>,
    weights: Vec<f64>,
}

impl SolutionPool {
    pub fn new(
        instance: impl Into<String>,
        mut entries: Vec<(Vec<u8>, f64)>,
        temperature: PoolTemperature,
    ) -> Self {
        entries.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (solutions, objectives): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let weights = pool_weights(&objectives, temperature);
        SolutionPool { instance: instance.into(), solutions, objectives, weights }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.solutions.first().map_or(0, Vec::len)
    }

    /// Default file location: `<dir>/<name>.pool.json` beside `<name>.milp`.
    pub fn path_for(instance_path: &Path) -> PathBuf {
        let stem = instance_path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
        instance_path.with_file_name(format!("{stem}.pool.json"))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PoolFile {
            instance: self.instance.clone(),
            objectives: self.objectives.clone(),
            assignments: self
                .solutions
                .iter()
                .map(|s| s.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect())
                .collect(),
            weights: self.weights.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Parses a pool and verifies every stored invariant against `inst`.
    pub fn from_json(text: &str, inst: &MilpInstance) -> Result<Self> {
        let file: PoolFile = serde_json::from_str(text)?;
        let bad = |msg: String| Err(Error::InvalidInstance(format!("pool for `{}`: {msg}", inst.name)));
        let k = file.assignments.len();
        if file.objectives.len() != k || file.weights.len() != k {
            return bad("objectives, assignments and weights differ in length".into());
        }
        if k == 0 {
            return bad("pool is empty".into());
        }
        let mut solutions = Vec::with_capacity(k);
        for (i, s) in file.assignments.iter().enumerate() {
            if s.len() != inst.p {
                return bad(format!("assignment {i} has length {} but p = {}", s.len(), inst.p));
            }
            let bits = s
                .bytes()
                .map(|b| match b {
                    b'0' => Ok(0u8),
                    b'1' => Ok(1u8),
                    _ => Err(()),
                })
                .collect::<std::result::Result<Vec<u8>, ()>>();
            let Ok(bits) = bits else {
                return bad(format!("assignment {i} is not a 0/1 string"));
            };
            match complete_assignment(inst, &bits, None)? {
                Some((_, obj)) => {
                    let stored = file.objectives[i];
                    if (obj - stored).abs() > 1e-6 * obj.abs().max(1.0) {
                        return bad(format!("assignment {i} has objective {obj}, file says {stored}"));
                    }
                }
                None => return bad(format!("assignment {i} is infeasible")),
            }
            solutions.push(bits);
        }
        if file.objectives.windows(2).any(|w| w[0] > w[1]) {
            return bad("objectives are not sorted ascending".into());
        }
        let sum: f64 = file.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || file.weights.iter().any(|w| !(*w >= 0.0)) {
            return bad(format!("weights sum to {sum}"));
        }
        if file.weights.windows(2).any(|w| w[1] > w[0]) {
            return bad("weights increase with objective".into());
        }
        Ok(SolutionPool {
            instance: file.instance,
            solutions,
            objectives: file.objectives,
            weights: file.weights,
        })
    }

    pub fn read(path: impl AsRef<Path>, inst: &MilpInstance) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, inst)
    }
}

/// Runs branch-and-bound in pool mode and keeps the `size` best distinct
/// solutions it encounters.
pub fn collect_pool(inst: &MilpInstance, size: usize, limits: &Limits) -> Result<SolutionPool> {
    collect_pool_with(inst, size, limits, PoolTemperature::Range)
}

pub fn collect_pool_with(
    inst: &MilpInstance,
    size: usize,
    limits: &Limits,
    temperature: PoolTemperature,
) -> Result<SolutionPool> {
    if size == 0 {
        return Err(Error::Argument("pool size must be >= 1".into()));
    }
    let (_, found) = enumerate_best(inst, limits, size)?;
    if found.is_empty() {
        return Err(Error::EmptyPool(inst.name.clone()));
    }
    let entries = found.into_iter().map(|(bits, _, obj)| (bits, obj)).collect();
    Ok(SolutionPool::new(inst.name.clone(), entries, temperature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate, knapsack_from, Family, GeneratorConfig, Row, RowSense};
    use crate::solver::brute_force;

    #[test]
    fn single_solution_weight_is_one() {
        assert_eq!(pool_weights(&[3.0], PoolTemperature::Range), vec![1.0]);
    }

    #[test]
    fn equal_objectives_split_evenly() {
        assert_eq!(pool_weights(&[2.0, 2.0], PoolTemperature::Range), vec![0.5, 0.5]);
    }

    #[test]
    fn range_temperature_example() {
        // max-form objectives 16 and 14 are stored as -16 and -14
        let w = pool_weights(&[-16.0, -14.0], PoolTemperature::Range);
        let e = (-1.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn temperature_parses() {
        assert_eq!("range".parse::<PoolTemperature>().unwrap(), PoolTemperature::Range);
        assert_eq!("2.5".parse::<PoolTemperature>().unwrap(), PoolTemperature::Fixed(2.5));
        assert!("-1".parse::<PoolTemperature>().is_err());
    }

    #[test]
    fn pool_matches_enumeration() {
        // all 8 knapsack assignments, feasible ones ranked by objective
        let inst = knapsack_from("kp", &[10.0, 6.0, 4.0], &[5.0, 4.0, 3.0], 10.0).unwrap();
        let pool = collect_pool(&inst, 3, &Limits::default()).unwrap();
        assert_eq!(pool.objectives, vec![-16.0, -14.0, -10.0]);
        assert_eq!(pool.solutions[0], vec![1, 1, 0]);
        assert!((pool.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let all = collect_pool(&inst, 100, &Limits::default()).unwrap();
        // feasible subsets: {}, {0},{1},{2},{0,1},{0,2},{1,2}
        assert_eq!(all.len(), 7);
    }

    #[test]
    fn pool_head_is_optimum_and_sorted() {
        for seed in 0..5 {
            let cfg = GeneratorConfig { params: crate::instances::FamilyParams::with_vars(Family::SetCover, 12), seed };
            let inst = generate(&cfg).unwrap();
            let pool = collect_pool(&inst, 10, &Limits::default()).unwrap();
            let exact = brute_force(&inst).unwrap();
            assert_eq!(pool.objectives[0], exact.objective);
            assert!(pool.objectives.windows(2).all(|w| w[0] <= w[1]));
            assert!(pool.weights.windows(2).all(|w| w[1] <= w[0]));
            let mut uniq = pool.solutions.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), pool.len());
        }
    }

    #[test]
    fn pool_is_exact_n_best() {
        // compare with brute-force ranking of all feasible points
        let cfg = GeneratorConfig { params: crate::instances::FamilyParams::with_vars(Family::Knapsack, 10), seed: 2 };
        let inst = generate(&cfg).unwrap();
        let mut objs = Vec::new();
        for mask in 0u32..(1 << inst.p) {
            let x: Vec<f64> = (0..inst.p).map(|j| ((mask >> j) & 1) as f64).collect();
            if inst.is_feasible(&x, 1e-9) {
                objs.push(inst.objective(&x));
            }
        }
        objs.sort_by(f64::total_cmp);
        let pool = collect_pool(&inst, 15, &Limits::default()).unwrap();
        assert_eq!(pool.objectives, objs[..15].to_vec());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let inst = knapsack_from("kp", &[10.0, 6.0, 4.0], &[5.0, 4.0, 3.0], 10.0).unwrap();
        let pool = collect_pool(&inst, 4, &Limits::default()).unwrap();
        let text = pool.to_json().unwrap();
        assert_eq!(SolutionPool::from_json(&text, &inst).unwrap(), pool);
        let broken = text.replacen("\"110\"", "\"111\"", 1);
        assert!(SolutionPool::from_json(&broken, &inst).is_err());
    }

    #[test]
    fn infeasible_instance_has_no_pool() {
        let inst = MilpInstance::binary(
            "bad",
            "test",
            false,
            vec![1.0],
            vec![Row::new(vec![0], vec![1.0], RowSense::Le, -1.0)],
        )
        .unwrap();
        assert!(matches!(collect_pool(&inst, 3, &Limits::default()), Err(Error::EmptyPool(_))));
    }
}
