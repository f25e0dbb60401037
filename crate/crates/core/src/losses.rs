//! Training objective: weighted BCE against a solution pool, expert
//! diversity, and routing robustness.

use std::str::FromStr;

use crate::autodiff::{Tape, Tensor, Var};
use crate::model::{TapeForward, TapePerturbed};
use crate::solver::SolutionPool;
use crate::{Error, Result};

/// Marginals are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BceReduction {
    /// Divide the pool-weighted sum by `p`.
    #[default]
    Mean,
    Sum,
}

impl FromStr for BceReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(BceReduction::Mean),
            "sum" => Ok(BceReduction::Sum),
            _ => Err(Error::Config(format!("bce_reduction must be mean or sum, got `{s}`"))),
        }
    }
}

impl BceReduction {
    pub fn as_str(self) -> &'static str {
        match self {
            BceReduction::Mean => "mean",
            BceReduction::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_div: f64,
    pub lambda_robust: f64,
    pub bce_reduction: BceReduction,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_div: 0.2, lambda_robust: 1.0, bce_reduction: BceReduction::Mean }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_div >= 0.0) || !(self.lambda_robust >= 0.0) {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-variable soft targets `t_j = sum_i w_i x_j^(i)` and the weight total.
fn soft_targets(pool: &SolutionPool, p: usize) -> Result<(Vec<f64>, f64)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool(pool.instance.clone()));
    }
    if pool.num_vars() != p {
        return Err(Error::Shape { op: "bce_loss", left: (p, 1), right: (pool.num_vars(), 1) });
    }
    let mut t = vec![0.0; p];
    for (sol, &w) in pool.solutions.iter().zip(&pool.weights) {
        for (tj, &x) in t.iter_mut().zip(sol) {
            *tj += w * f64::from(x);
        }
    }
    Ok((t, pool.weights.iter().sum()))
}

/// Weighted binary cross-entropy of `marginals` (`p x 1`) against the pool.
pub fn bce_loss(tape: &mut Tape, marginals: Var, pool: &SolutionPool, reduction: BceReduction) -> Result<Var> {
    let p = tape.value(marginals).len();
    let (t, total_w) = soft_targets(pool, p)?;
    let rest: Vec<f64> = t.iter().map(|tj| total_w - tj).collect();
    let pos = tape.constant(Tensor::from_vec(p, 1, t)?)?;
    let neg = tape.constant(Tensor::from_vec(p, 1, rest)?)?;
    let x = tape.clamp(marginals, EPS, 1.0 - EPS)?;
    let ln_x = tape.ln(x)?;
    let one_minus = tape.scale(x, -1.0)?;
    let one_minus = tape.add_const(one_minus, 1.0)?;
    let ln_1mx = tape.ln(one_minus)?;
    let a = tape.dot(pos, ln_x)?;
    let b = tape.dot(neg, ln_1mx)?;
    let s = tape.add(a, b)?;
    let k = match reduction {
        BceReduction::Mean => -1.0 / p as f64,
        BceReduction::Sum => -1.0,
    };
    tape.scale(s, k)
}

/// Off-tape value of [`bce_loss`].
pub fn bce_value(marginals: &[f64], pool: &SolutionPool, reduction: BceReduction) -> Result<f64> {
    let p = marginals.len();
    let (t, total_w) = soft_targets(pool, p)?;
    let s: f64 = marginals
        .iter()
        .zip(&t)
        .map(|(&x, &tj)| {
            let x = x.clamp(EPS, 1.0 - EPS);
            tj * x.ln() + (total_w - tj) * (1.0 - x).ln()
        })
        .sum();
    Ok(match reduction {
        BceReduction::Mean => -s / p as f64,
        BceReduction::Sum => -s,
    })
}

/// Mean absolute pairwise cosine similarity between flattened expert outputs.
pub fn diversity_loss(tape: &mut Tape, experts: &[Var]) -> Result<Var> {
    let m = experts.len();
    if m < 2 {
        return tape.constant(Tensor::scalar(0.0));
    }
    let norms = experts.iter().map(|&e| tape.l2_norm(e)).collect::<Result<Vec<_>>>()?;
    let mut acc = tape.constant(Tensor::scalar(0.0))?;
    for a in 0..m {
        for b in a + 1..m {
            if tape.value(norms[a]).item() == 0.0 || tape.value(norms[b]).item() == 0.0 {
                log::warn!("expert output {} or {} has zero norm; pair cosine taken as 0", a, b);
                continue;
            }
            let dot = tape.dot(experts[a], experts[b])?;
            let c = tape.div_scalar(dot, norms[a])?;
            let c = tape.div_scalar(c, norms[b])?;
            let c = tape.abs(c)?;
            acc = tape.add(acc, c)?;
        }
    }
    // Each unordered pair stands for two ordered ones.
    tape.scale(acc, 2.0 / (m * (m - 1)) as f64)
}

/// `(1/p) * sum_j ||z̃_j - z_j||^2`.
pub fn robust_loss(tape: &mut Tape, z: Var, z_tilde: Var, p: usize) -> Result<Var> {
    let diff = tape.sub(z_tilde, z)?;
    let sq = tape.dot(diff, diff)?;
    tape.scale(sq, 1.0 / p as f64)
}

/// Total loss handle plus the value of each term.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub total_value: f64,
    pub bce: f64,
    pub diversity: f64,
    pub robust: f64,
}

/// `L_BCE + λ_Div L_Div + λ_Robust L_Robust`. Without a perturbed pass the
/// robustness term is zero.
pub fn total_loss(
    tape: &mut Tape,
    fwd: &TapeForward,
    perturbed: Option<&TapePerturbed>,
    pool: &SolutionPool,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let bce = bce_loss(tape, fwd.marginals, pool, weights.bce_reduction)?;
    let div = diversity_loss(tape, &fwd.expert_outputs)?;
    let robust = match perturbed {
        Some(pt) => {
            let mut r = robust_loss(tape, fwd.z, pt.z, fwd.p)?;
            if let Some(lt) = pt.logits {
                let extra = robust_loss(tape, fwd.logits, lt, fwd.p)?;
                r = tape.add(r, extra)?;
            }
            r
        }
        None => tape.constant(Tensor::scalar(0.0))?,
    };
    let d = tape.scale(div, weights.lambda_div)?;
    let r = tape.scale(robust, weights.lambda_robust)?;
    let total = tape.add(bce, d)?;
    let total = tape.add(total, r)?;
    Ok(LossTerms {
        total,
        total_value: tape.value(total).item(),
        bce: tape.value(bce).item(),
        diversity: tape.value(div).item(),
        robust: tape.value(robust).item(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;
    use crate::graph::encode;
    use crate::instances::{generate, Family, FamilyParams, GeneratorConfig};
    use crate::model::{sample_direction, ModelConfig, RomeModel};
    use crate::rng::seeded;
    use crate::solver::{collect_pool, Limits};
    use proptest::prelude::*;

    fn pool(solutions: Vec<Vec<u8>>, weights: Vec<f64>) -> SolutionPool {
        let objectives = vec![0.0; solutions.len()];
        SolutionPool { instance: "t".into(), solutions, objectives, weights }
    }

    fn bce_at(x: &[f64], pool: &SolutionPool) -> f64 {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::from_vec(x.len(), 1, x.to_vec()).unwrap()).unwrap();
        let l = bce_loss(&mut tape, v, pool, BceReduction::Mean).unwrap();
        tape.value(l).item()
    }

    fn vars(tape: &mut Tape, rows: &[Vec<f64>]) -> Vec<Var> {
        rows.iter().map(|r| tape.constant(Tensor::row(r)).unwrap()).collect()
    }

    fn div_of(rows: &[Vec<f64>]) -> f64 {
        let mut tape = Tape::new();
        let v = vars(&mut tape, rows);
        let l = diversity_loss(&mut tape, &v).unwrap();
        tape.value(l).item()
    }

    fn robust_of(z: &[f64], zt: &[f64], p: usize) -> f64 {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(p, z.len() / p, z.to_vec()).unwrap()).unwrap();
        let b = tape.constant(Tensor::from_vec(p, z.len() / p, zt.to_vec()).unwrap()).unwrap();
        let l = robust_loss(&mut tape, a, b, p).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn bce_examples() {
        let one = pool(vec![vec![1]], vec![1.0]);
        assert!((bce_at(&[0.5], &one) - 2f64.ln()).abs() < 1e-12);
        let fit = pool(vec![vec![1, 0, 1]], vec![1.0]);
        let l = bce_at(&[1.0, 0.0, 1.0], &fit);
        assert!((l + (1.0 - EPS).ln()).abs() < 1e-15 && l < 1e-6);
        assert!((bce_value(&[0.3, 0.2, 0.9], &fit, BceReduction::Sum).unwrap()
            - 3.0 * bce_value(&[0.3, 0.2, 0.9], &fit, BceReduction::Mean).unwrap())
        .abs()
            < 1e-12);
    }

    #[test]
    fn bce_minimizer_is_weighted_mean() {
        let pl = pool(vec![vec![1], vec![0]], vec![0.7311, 0.2689]);
        let f = |x: f64| bce_at(&[x], &pl);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (1e-6, 1.0 - 1e-6);
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!(((a + b) / 2.0 - 0.7311).abs() < 1e-6);
    }

    #[test]
    fn bce_rejects_mismatched_pool() {
        let pl = pool(vec![vec![1, 0]], vec![1.0]);
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::filled(3, 1, 0.5)).unwrap();
        assert!(bce_loss(&mut tape, v, &pl, BceReduction::Mean).is_err());
        assert!(matches!(
            bce_value(&[0.5], &pool(vec![], vec![]), BceReduction::Mean),
            Err(Error::EmptyPool(_))
        ));
    }

    #[test]
    fn bce_descent_is_monotone() {
        let pl = pool(vec![vec![1]], vec![1.0]);
        let mut store = ParamStore::new();
        let id = store.insert("s", Tensor::scalar(-1.0)).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let mut tape = Tape::new();
            let s = tape.param(&store, id);
            let x = tape.sigmoid(s).unwrap();
            let l = bce_loss(&mut tape, x, &pl, BceReduction::Mean).unwrap();
            let v = tape.value(l).item();
            assert!(v < last);
            last = v;
            store.zero_grad();
            tape.backward(l, &mut store).unwrap();
            crate::autodiff::sgd_step(&mut store, 0.1);
        }
    }

    #[test]
    fn diversity_examples() {
        assert!((div_of(&[vec![1.0, 2.0], vec![1.0, 2.0]]) - 1.0).abs() < 1e-12);
        assert!(div_of(&[vec![1.0, 0.0], vec![0.0, 3.0]]).abs() < 1e-12);
        assert!((div_of(&[vec![1.0, 0.0], vec![1.0, 1.0]]) - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(div_of(&[vec![1.0, 0.0]]), 0.0);
        assert_eq!(div_of(&[vec![0.0, 0.0], vec![1.0, 1.0]]), 0.0);
    }

    #[test]
    fn robust_examples() {
        assert_eq!(robust_of(&[1.0, 2.0], &[1.0, 2.0], 1), 0.0);
        assert!((robust_of(&[0.0, 0.0], &[3.0, 4.0], 1) - 25.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn diversity_in_unit_interval_and_symmetric(
            rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 2..5),
            shift in 0usize..4,
        ) {
            let d = div_of(&rows);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
            let mut rotated = rows.clone();
            let k = shift % rotated.len();
            rotated.rotate_left(k);
            prop_assert!((div_of(&rotated) - d).abs() < 1e-12);
        }

        #[test]
        fn robust_homogeneous_and_rotation_invariant(
            z in prop::collection::vec(-3.0..3.0f64, 6),
            zt in prop::collection::vec(-3.0..3.0f64, 6),
            theta in 0.0..std::f64::consts::TAU,
        ) {
            let base = robust_of(&z, &zt, 3);
            prop_assert!(base >= 0.0);
            let dbl = |v: &[f64]| v.iter().map(|x| 2.0 * x).collect::<Vec<_>>();
            prop_assert!((robust_of(&dbl(&z), &dbl(&zt), 3) - 4.0 * base).abs() < 1e-9);
            // Rows are 2-vectors; rotate each by theta.
            let rot = |v: &[f64]| {
                let (s, c) = theta.sin_cos();
                v.chunks(2).flat_map(|r| [c * r[0] - s * r[1], s * r[0] + c * r[1]]).collect::<Vec<_>>()
            };
            prop_assert!((robust_of(&rot(&z), &rot(&zt), 3) - base).abs() < 1e-9);
        }

        #[test]
        fn bce_nonnegative(x in prop::collection::vec(0.0..1.0f64, 3), bits in prop::collection::vec(0u8..2, 6)) {
            let pl = pool(vec![bits[..3].to_vec(), bits[3..].to_vec()], vec![0.6, 0.4]);
            prop_assert!(bce_at(&x, &pl) >= 0.0);
        }
    }

    fn tiny_setup(cfg: ModelConfig) -> (RomeModel, crate::graph::BipartiteGraph, SolutionPool) {
        let inst = generate(&GeneratorConfig { params: FamilyParams::with_vars(Family::SetCover, 6), seed: 3 }).unwrap();
        let pl = collect_pool(&inst, 4, &Limits::default()).unwrap();
        (RomeModel::new(cfg, 5).unwrap(), encode(&inst), pl)
    }

    fn loss_value(model: &RomeModel, graph: &crate::graph::BipartiteGraph, pl: &SolutionPool, dir: &[f64], w: &LossWeights) -> f64 {
        let mut tape = Tape::new();
        let f = model.forward_tape(&mut tape, graph).unwrap();
        let pt = model.perturb_tape(&mut tape, &f, dir).unwrap();
        total_loss(&mut tape, &f, Some(&pt), pl, w).unwrap().total_value
    }

    #[test]
    fn zero_lambdas_and_single_expert_reduce_to_bce() {
        let (model, graph, pl) = tiny_setup(ModelConfig { embed_dim: 4, ..Default::default() });
        let dir = sample_direction(&mut seeded(1), 4);
        let w0 = LossWeights { lambda_div: 0.0, lambda_robust: 0.0, ..Default::default() };
        let mut tape = Tape::new();
        let f = model.forward_tape(&mut tape, &graph).unwrap();
        let pt = model.perturb_tape(&mut tape, &f, &dir).unwrap();
        let t = total_loss(&mut tape, &f, Some(&pt), &pl, &w0).unwrap();
        assert_eq!(t.total_value, t.bce);

        let (single, graph, pl) = tiny_setup(ModelConfig { embed_dim: 4, num_experts: 1, ..Default::default() });
        let mut tape = Tape::new();
        let f = single.forward_tape(&mut tape, &graph).unwrap();
        let pt = single.perturb_tape(&mut tape, &f, &dir).unwrap();
        let t = total_loss(&mut tape, &f, Some(&pt), &pl, &LossWeights::default()).unwrap();
        assert_eq!((t.diversity, t.robust), (0.0, 0.0));
        assert_eq!(t.total_value, t.bce);
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        for knob in [false, true] {
            let cfg = ModelConfig { embed_dim: 3, num_experts: 2, num_heads: 2, r_init: 0.3, perturb_decoder_gate: knob, ..Default::default() };
            let (mut model, graph, pl) = tiny_setup(cfg);
            let w = LossWeights::default();
            let dir = sample_direction(&mut seeded(7), 3);

            let mut tape = Tape::new();
            let f = model.forward_tape(&mut tape, &graph).unwrap();
            let pt = model.perturb_tape(&mut tape, &f, &dir).unwrap();
            let terms = total_loss(&mut tape, &f, Some(&pt), &pl, &w).unwrap();
            model.store_mut().zero_grad();
            tape.backward(terms.total, model.store_mut()).unwrap();

            let ids: Vec<_> = model.store().ids().collect();
            let mut checked = 0;
            for id in ids {
                let analytic = model.store().grad(id).clone();
                for k in 0..analytic.len() {
                    let orig = model.store().value(id).data()[k];
                    let h = 1e-6;
                    model.store_mut().value_mut(id).data_mut()[k] = orig + h;
                    let up = loss_value(&model, &graph, &pl, &dir, &w);
                    model.store_mut().value_mut(id).data_mut()[k] = orig - h;
                    let down = loss_value(&model, &graph, &pl, &dir, &w);
                    model.store_mut().value_mut(id).data_mut()[k] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let a = analytic.data()[k];
                    if a.abs() < 1e-7 && numeric.abs() < 1e-7 {
                        continue;
                    }
                    let err = (a - numeric).abs();
                    assert!(err <= 1e-4 * a.abs().max(numeric.abs()) + 1e-9, "{} [{k}]: analytic {a} numeric {numeric}", model.store().name(id));
                    checked += 1;
                }
            }
            assert!(checked > 50);
        }
    }
}
