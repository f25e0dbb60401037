use super::*;
use crate::instances::{generate, knapsack_from, Family, FamilyParams, GeneratorConfig, Row, RowSense};
use crate::model::ModelConfig;
use crate::rng::{derive_seed, seeded};
use crate::solver::{brute_force, verify_solution};
use rand::Rng as _;

fn triangle() -> MilpInstance {
    let edge = |a, b| Row::new(vec![a, b], vec![1.0, 1.0], RowSense::Le, 1.0);
    MilpInstance::binary("tri", "independent_set", true, vec![-1.0; 3], vec![edge(0, 1), edge(1, 2), edge(0, 2)]).unwrap()
}

fn instance(family: Family, vars: usize, seed: u64) -> MilpInstance {
    generate(&GeneratorConfig { params: FamilyParams::with_vars(family, vars), seed }).unwrap()
}

fn model(experts: usize) -> RomeModel {
    RomeModel::new(ModelConfig { embed_dim: 8, num_experts: experts, ..Default::default() }, 3).unwrap()
}

fn random_marginals(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..p).map(|_| rng.gen::<f64>()).collect()
}

#[test]
fn full_ball_matches_plain_solver() {
    for (t, family) in Family::ALL.into_iter().enumerate() {
        for cap in [1, 5, 1_000_000] {
            let inst = instance(family, 20, derive_seed(5, t as u64));
            let limits = Limits::nodes(cap);
            let plain = branch_and_bound(&inst, &Fixings::none(inst.p), None, &limits).unwrap();
            let params = SearchParams { k0: 0, k1: 0, delta: inst.p as f64, limits };
            let (res, attempts) = search_with_marginals(&inst, &random_marginals(inst.p, t as u64), &params).unwrap();
            assert_eq!(res.objective, plain.objective, "{family} cap {cap}");
            assert_eq!(attempts.len(), 1);
        }
    }
}

#[test]
fn triangle_with_untrained_model() {
    let inst = triangle();
    let params = SearchParams { k0: 0, k1: 0, delta: 3.0, limits: Limits::default() };
    let out = predict_and_search(&model(3), &inst, &params).unwrap();
    let best = brute_force(&inst).unwrap().objective;
    assert_eq!(out.result.objective, best);
    assert_eq!(inst.reported_objective(out.result.objective), 1.0);
}

#[test]
fn fixing_everything_to_zero() {
    let inst = instance(Family::IndependentSet, 15, 2);
    let params = SearchParams { k0: inst.p, k1: 0, delta: 0.0, limits: Limits::default() };
    let (res, _) = search_with_marginals(&inst, &random_marginals(inst.p, 1), &params).unwrap();
    assert_eq!(res.objective, 0.0);
    assert!(res.incumbent.unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn infeasible_region_falls_back() {
    // Predicting both ends of an edge as 1 and fixing them is infeasible.
    let inst = triangle();
    let params = SearchParams { k0: 0, k1: 2, delta: 0.0, limits: Limits::default() };
    let (res, attempts) = search_with_marginals(&inst, &[0.9, 0.8, 0.1], &params).unwrap();
    assert_eq!(attempts.len(), 5);
    assert_eq!(attempts.iter().map(|a| a.delta).collect::<Vec<_>>(), vec![Some(0.0), Some(1.0), Some(2.0), Some(4.0), None]);
    assert_eq!(res.objective, -1.0);
    assert_eq!(res.nodes_explored, attempts.iter().map(|a| a.nodes).sum::<usize>());
}

#[test]
fn fallback_respects_shared_budget() {
    let inst = triangle();
    let params = SearchParams { k0: 0, k1: 2, delta: 0.0, limits: Limits::nodes(2) };
    let (res, attempts) = search_with_marginals(&inst, &[0.9, 0.8, 0.1], &params).unwrap();
    assert!(res.nodes_explored <= 2);
    assert!(attempts.len() <= 2);
}

#[test]
fn returned_solutions_respect_region() {
    for (t, family) in Family::ALL.into_iter().enumerate() {
        for trial in 0..5u64 {
            let inst = instance(family, 18, derive_seed(t as u64, trial));
            let marg = random_marginals(inst.p, trial);
            let params = SearchFractions::default().params_for(inst.p, &Limits::default());
            let (res, attempts) = search_with_marginals(&inst, &marg, &params).unwrap();
            let Some(x) = res.incumbent else { continue };
            let (fix, trust) = trust_region_setup(&marg, params.k0, params.k1, params.delta).unwrap();
            match attempts.last().unwrap().delta {
                Some(d) => {
                    let trust = TrustRegion::new(trust.center.clone(), d).unwrap();
                    assert!(verify_solution(&inst, &x, &fix, Some(&trust)));
                    assert!(trust.distance(&x, &fix) <= d + 1e-9);
                }
                None => assert!(verify_solution(&inst, &x, &Fixings::none(inst.p), None)),
            }
        }
    }
}

#[test]
fn larger_budget_never_hurts() {
    let m = model(3);
    for (t, family) in Family::ALL.into_iter().enumerate() {
        let inst = instance(family, 30, derive_seed(11, t as u64));
        let mut last_plain = f64::INFINITY;
        let mut last_ps = f64::INFINITY;
        for cap in [1, 2, 4, 8, 16, 64, 1000] {
            let limits = Limits::nodes(cap);
            let plain = branch_and_bound(&inst, &Fixings::none(inst.p), None, &limits).unwrap();
            assert!(plain.objective <= last_plain);
            last_plain = plain.objective;
            let params = SearchFractions::default().params_for(inst.p, &limits);
            let ps = predict_and_search(&m, &inst, &params).unwrap();
            assert!(ps.result.objective <= last_ps);
            last_ps = ps.result.objective;
        }
    }
}

#[test]
fn fractions_scale_with_p() {
    let f = SearchFractions::default();
    let p = f.params_for(40, &Limits::default());
    assert_eq!((p.k0, p.k1, p.delta), (12, 8, 2.0));
    assert_eq!("0.1, 0, 0.5".parse::<SearchFractions>().unwrap(), SearchFractions::new(0.1, 0.0, 0.5).unwrap());
    assert!("0.8,0.5,0".parse::<SearchFractions>().is_err());
    assert!("0.1,0.1".parse::<SearchFractions>().is_err());
    let bad = SearchParams { k0: 3, k1: 2, delta: 1.0, limits: Limits::default() };
    assert!(bad.validate(4).is_err());
}

#[test]
fn bks_examples() {
    let kp = knapsack_from("kp", &[10.0, 6.0, 4.0], &[5.0, 4.0, 3.0], 10.0).unwrap();
    let bks = compute_bks(&kp, &Limits::default()).unwrap();
    assert_eq!(kp.reported_objective(bks), 16.0);

    let row = Row::new(vec![0, 1], vec![1.0, 1.0], RowSense::Ge, 3.0);
    let infeasible = MilpInstance::binary("inf", "t", false, vec![1.0, 1.0], vec![row]).unwrap();
    assert!(matches!(compute_bks(&infeasible, &Limits::default()), Err(Error::Infeasible(_))));
}

#[test]
fn gap_from_published_pair() {
    let (abs, rel) = eval::gaps(125.21, 124.64);
    assert!((abs - 0.57).abs() < 1e-9);
    assert!((rel.unwrap() - 0.00457).abs() < 5e-6);
    assert_eq!(eval::gaps(3.0, 0.0).1, None);
}

fn cases(family: Family, count: u64) -> Vec<EvalInstance> {
    (0..count)
        .map(|s| {
            let instance = instance(family, 20, derive_seed(77, s));
            let bks = compute_bks(&instance, &Limits::default()).unwrap();
            EvalInstance { instance, bks }
        })
        .collect()
}

#[test]
fn single_method_at_optimum() {
    let report = evaluate_suite(&[Method::solver("bnb")], &cases(Family::Knapsack, 1), &Limits::default());
    assert_eq!(report.rows[0].gap_abs, 0.0);
    assert_eq!(report.summaries[0].wins, 1);
    assert_eq!(report.summaries[0].losses, 0);
}

#[test]
fn ties_award_every_method() {
    let cs = cases(Family::SetCover, 4);
    let report = evaluate_suite(&[Method::solver("a"), Method::solver("b")], &cs, &Limits::nodes(3));
    assert_eq!(report.summaries[0].wins, report.summaries[1].wins);
    assert!(report.summaries.iter().map(|s| s.wins).sum::<usize>() >= cs.len());
}

#[test]
fn bks_bounds_every_method() {
    let m = model(3);
    let cs = cases(Family::CombAuction, 5);
    let methods = [Method::solver("bnb"), Method::model("ps", &m, SearchFractions::default())];
    let report = evaluate_suite(&methods, &cs, &Limits::nodes(10));
    for row in &report.rows {
        let case = cs.iter().find(|c| c.instance.name == row.instance).unwrap();
        if row.objective.is_some() {
            assert!(case.bks <= row.min_objective + 1e-9);
            assert!(row.gap_abs >= 0.0);
        }
    }
    assert_eq!(report.rows.len(), 10);
    let csv = render_eval_csv(&report);
    assert_eq!(csv.lines().count(), 12);
    assert!(render_summary_csv(&report).lines().nth(2).unwrap().starts_with("bnb,5,"));
    assert!(render_trajectory_csv(&report).lines().count() > 2);
}

#[test]
fn failures_become_rows() {
    let row = Row::new(vec![0, 1], vec![1.0, 1.0], RowSense::Ge, 3.0);
    let infeasible = MilpInstance::binary("inf", "t", false, vec![1.0, 1.0], vec![row]).unwrap();
    let cs = vec![EvalInstance { instance: infeasible, bks: 0.0 }];
    let m = model(3);
    let report = evaluate_suite(
        &[Method::solver("bnb"), Method::model("bad", &m, SearchFractions::default())],
        &cs,
        &Limits::default(),
    );
    assert!(report.rows.iter().all(|r| r.objective.is_none() && r.gap_abs.is_infinite()));
    assert_eq!(report.summaries[0].losses, 1);
}

#[test]
fn explain_exports() {
    let single = model(1);
    let inst = instance(Family::SetPacking, 12, 1);
    let rows = explain(&single, &[inst.clone(), inst.clone()]).unwrap();
    assert!(rows.iter().all(|r| r.argmax_expert == 0));
    assert_eq!(rows[0], rows[1]);

    let rows = explain(&model(3), &[inst.clone(), instance(Family::Knapsack, 12, 2)]).unwrap();
    let csv = render_activation_csv(&rows);
    for line in csv.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        let alpha: f64 = cols[3..6].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((alpha - 1.0).abs() < 1e-9);
    }
    let emb = render_embedding_csv(&rows);
    assert_eq!(emb.lines().nth(1).unwrap().split(',').count(), 2 + 8);
}
