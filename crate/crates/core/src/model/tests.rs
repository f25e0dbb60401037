use super::*;
use crate::graph::encode;
use crate::instances::{generate, Family, FamilyParams, GeneratorConfig, MilpInstance, Row, RowSense};

fn small_config() -> ModelConfig {
    ModelConfig { embed_dim: 8, ..Default::default() }
}

fn instance(family: Family, seed: u64) -> MilpInstance {
    let cfg = GeneratorConfig { params: FamilyParams::with_vars(family, 12), seed };
    generate(&cfg).unwrap()
}

/// Relabels binaries by `perm` (old index j becomes perm[j]) and reverses
/// the constraint order.
fn relabel(inst: &MilpInstance, perm: &[usize]) -> MilpInstance {
    let map = |j: usize| if j < inst.p { perm[j] } else { j };
    let mut c = inst.c.clone();
    for j in 0..inst.n {
        c[map(j)] = inst.c[j];
    }
    let rows = inst
        .rows
        .iter()
        .rev()
        .map(|r| {
            let sense = match r.sense {
                crate::instances::Sense::Le => RowSense::Le,
                crate::instances::Sense::Eq => RowSense::Eq,
            };
            Row::new(r.indices.iter().map(|&j| map(j)).collect(), r.coefs.clone(), sense, r.rhs)
        })
        .collect();
    let mut lb = inst.lb.clone();
    let mut ub = inst.ub.clone();
    for j in 0..inst.n {
        lb[map(j)] = inst.lb[j];
        ub[map(j)] = inst.ub[j];
    }
    MilpInstance::new("perm", inst.domain_tag.clone(), inst.maximize, inst.p, c, rows, lb, ub).unwrap()
}

fn permutation(p: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(&mut seeded(seed));
    perm
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn gates_are_distributions() {
    let model = RomeModel::new(small_config(), 1).unwrap();
    for family in Family::ALL {
        let out = model.forward(&encode(&instance(family, 3))).unwrap();
        assert!((out.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((out.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.marginals.iter().all(|&x| x > 0.0 && x < 1.0));
        assert_eq!(out.z.shape(), (out.marginals.len(), 8));
    }
}

#[test]
fn single_expert_single_head_has_no_mixture() {
    let cfg = ModelConfig { num_experts: 1, num_heads: 1, ..small_config() };
    let model = RomeModel::new(cfg, 2).unwrap();
    let out = model.forward(&encode(&instance(Family::SetCover, 4))).unwrap();
    assert_eq!(out.alpha, vec![1.0]);
    assert_eq!(out.beta, vec![1.0]);
    assert_eq!(out.z, out.expert_outputs[0]);
}

#[test]
fn identical_experts_ignore_routing() {
    let mut model = RomeModel::new(small_config(), 5).unwrap();
    let names: Vec<String> =
        model.store().entries().filter(|(n, _)| n.starts_with("expert0.")).map(|(n, _)| n.to_string()).collect();
    for name in &names {
        let src = model.store().value(model.store().id(name).unwrap()).clone();
        for m in 1..3 {
            let id = model.store().id(&name.replacen("expert0", &format!("expert{m}"), 1)).unwrap();
            *model.store_mut().value_mut(id) = src.clone();
        }
    }
    let out = model.forward(&encode(&instance(Family::IndependentSet, 6))).unwrap();
    assert!(close(out.z.data(), out.expert_outputs[0].data(), 1e-12));
}

#[test]
fn low_temperature_keeps_argmax() {
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    for seed in 0..10 {
        let graph = encode(&instance(Family::CombAuction, seed));
        let warm = RomeModel::new(small_config(), seed).unwrap().forward(&graph).unwrap();
        let cold = RomeModel::new(ModelConfig { tau: 1e-6, ..small_config() }, seed).unwrap().forward(&graph).unwrap();
        assert_eq!(argmax(&warm.alpha), argmax(&cold.alpha));
        assert!(cold.alpha.iter().cloned().fold(0.0, f64::max) > 0.999);
    }
}

#[test]
fn zero_edges_reduce_to_update_of_empty_message() {
    let cfg = ModelConfig { conv_layers: 1, ..small_config() };
    let model = RomeModel::new(cfg, 7).unwrap();
    let inst = MilpInstance::binary("free", "t", false, vec![1.0, -2.0, 0.5], vec![]).unwrap();
    let graph = encode(&inst);
    let mut tape = Tape::new();
    let h = model.encode(&mut tape, &graph).unwrap();
    let got = tape.value(h).clone();

    let mut t2 = Tape::new();
    let x = t2.constant(Tensor::from_rows(&graph.var_features)).unwrap();
    let hv = model.params.var_embed.forward(&mut t2, model.store(), x).unwrap();
    let zeros = t2.constant(Tensor::zeros(3, 8)).unwrap();
    let cat = t2.concat_cols(&[hv, zeros]).unwrap();
    let want = model.params.convs[0].var_update.forward(&mut t2, model.store(), cat).unwrap();
    assert!(close(got.data(), t2.value(want).data(), 1e-12));
}

#[test]
fn relabeling_binaries_permutes_marginals() {
    let model = RomeModel::new(small_config(), 11).unwrap();
    for (k, family) in Family::ALL.into_iter().enumerate() {
        let inst = instance(family, 20 + k as u64);
        let perm = permutation(inst.p, k as u64);
        let a = model.forward(&encode(&inst)).unwrap();
        let b = model.forward(&encode(&relabel(&inst, &perm))).unwrap();
        for j in 0..inst.p {
            assert!((a.marginals[j] - b.marginals[perm[j]]).abs() < 1e-9);
        }
        assert!(close(&a.alpha, &b.alpha, 1e-9));
        assert!(close(&a.beta, &b.beta, 1e-9));
        assert!(close(&a.h_g, &b.h_g, 1e-9));
    }
}

#[test]
fn isomorphic_graphs_share_embedding_multiset() {
    let model = RomeModel::new(small_config(), 13).unwrap();
    let inst = instance(Family::SetPacking, 9);
    let other = relabel(&inst, &permutation(inst.p, 99));
    let sorted_rows = |inst: &MilpInstance| {
        let mut tape = Tape::new();
        let h = model.encode(&mut tape, &encode(inst)).unwrap();
        let t = tape.value(h);
        let mut rows: Vec<Vec<f64>> = (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    };
    let (a, b) = (sorted_rows(&inst), sorted_rows(&other));
    for (x, y) in a.iter().zip(&b) {
        assert!(close(x, y, 1e-9));
    }
}

#[test]
fn task_embedding_is_row_mean() {
    let mut tape = Tape::new();
    let v = [0.5, -1.0, 2.0];
    let h = tape.constant(Tensor::from_rows(&[v, v, v])).unwrap();
    let g = task_embedding(&mut tape, h, 3).unwrap();
    assert_eq!(tape.value(g).data(), &v);

    let h = tape.constant(Tensor::from_rows(&[v, v.map(|x| -x)])).unwrap();
    let g = task_embedding(&mut tape, h, 2).unwrap();
    assert!(tape.value(g).data().iter().all(|&x| x == 0.0));

    let mut rng = seeded(4);
    let data: Vec<f64> = (0..7 * 5).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let h = tape.constant(Tensor::from_vec(7, 5, data.clone()).unwrap()).unwrap();
    let g = task_embedding(&mut tape, h, 4).unwrap();
    let oracle: Vec<f64> = (0..5).map(|c| (0..4).map(|r| data[r * 5 + c]).sum::<f64>() / 4.0).collect();
    assert!(close(tape.value(g).data(), &oracle, 1e-12));

    assert!(matches!(task_embedding(&mut tape, h, 0), Err(Error::Argument(_))));
}

#[test]
fn perturbation_has_radius_r() {
    let model = RomeModel::new(small_config(), 17).unwrap();
    let graph = encode(&instance(Family::Knapsack, 1));
    let mut rng = seeded(8);
    for _ in 0..5 {
        let dir = sample_direction(&mut rng, 8);
        let mut tape = Tape::new();
        let f = model.forward_tape(&mut tape, &graph).unwrap();
        let pt = model.perturb_tape(&mut tape, &f, &dir).unwrap();
        let dist: f64 = tape
            .value(pt.h_g)
            .data()
            .iter()
            .zip(tape.value(f.h_g).data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((dist - 0.1).abs() < 1e-12);
    }
}

#[test]
fn zero_radius_or_single_expert_leaves_z_unchanged() {
    let graph = encode(&instance(Family::IndependentSet, 2));
    let mut model = RomeModel::new(small_config(), 19).unwrap();
    model.set_r(0.0);
    let (z, zt) = model.perturb_and_forward(&graph, &mut seeded(1)).unwrap();
    assert_eq!(z, zt);

    let single = RomeModel::new(ModelConfig { num_experts: 1, r_init: 5.0, ..small_config() }, 3).unwrap();
    let (z, zt) = single.perturb_and_forward(&graph, &mut seeded(1)).unwrap();
    assert_eq!(z, zt);
}

#[test]
fn gradient_reaches_r() {
    let mut model = RomeModel::new(small_config(), 23).unwrap();
    let graph = encode(&instance(Family::SetCover, 5));
    let dir = sample_direction(&mut seeded(2), 8);
    let mut tape = Tape::new();
    let f = model.forward_tape(&mut tape, &graph).unwrap();
    let pt = model.perturb_tape(&mut tape, &f, &dir).unwrap();
    let diff = tape.sub(pt.z, f.z).unwrap();
    let loss = tape.dot(diff, diff).unwrap();
    model.store_mut().zero_grad();
    let r_id = model.r_id();
    tape.backward(loss, model.store_mut()).unwrap();
    assert!(model.store().grad(r_id).item().abs() > 1e-12);
}

#[test]
fn decoder_gate_knob_adds_perturbed_logits() {
    let cfg = ModelConfig { perturb_decoder_gate: true, ..small_config() };
    let model = RomeModel::new(cfg, 29).unwrap();
    let graph = encode(&instance(Family::CombAuction, 5));
    let mut tape = Tape::new();
    let f = model.forward_tape(&mut tape, &graph).unwrap();
    let pt = model.perturb_tape(&mut tape, &f, &sample_direction(&mut seeded(0), 8)).unwrap();
    assert_eq!(tape.value(pt.logits.unwrap()).shape(), tape.value(f.logits).shape());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = ModelConfig { num_heads: 2, tau_dec: 0.5, ..small_config() };
    let model = RomeModel::new(cfg, 31).unwrap();
    model.save(&path).unwrap();
    let back = RomeModel::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    let graph = encode(&instance(Family::SetPacking, 5));
    assert_eq!(back.forward(&graph).unwrap(), model.forward(&graph).unwrap());
}

#[test]
fn same_seed_same_parameters() {
    let a = RomeModel::new(small_config(), 37).unwrap();
    let b = RomeModel::new(small_config(), 37).unwrap();
    let c = RomeModel::new(small_config(), 38).unwrap();
    assert_eq!(a.to_checkpoint(), b.to_checkpoint());
    assert_ne!(a.to_checkpoint(), c.to_checkpoint());
}
