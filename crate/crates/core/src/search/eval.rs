use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{predict_and_search, SearchFractions};
use crate::instances::MilpInstance;
use crate::model::RomeModel;
use crate::solver::{branch_and_bound, BnbResult, Fixings, Limits};
use crate::{Error, Result};

pub const EVAL_SCHEMA: &str = "# rome-eval v1";
pub const SUMMARY_SCHEMA: &str = "# rome-eval-summary v1";
pub const TRAJECTORY_SCHEMA: &str = "# rome-trajectory v1";

/// Objectives closer than this count as a tie.
const TIE_TOL: f64 = 1e-6;

/// A solver configuration under evaluation: plain branch-and-bound when
/// `model` is `None`, otherwise predict-and-search with that model.
#[derive(Debug, Clone)]
pub struct Method<'a> {
    pub label: String,
    pub model: Option<&'a RomeModel>,
    pub fractions: SearchFractions,
}

impl<'a> Method<'a> {
    pub fn solver(label: impl Into<String>) -> Self {
        Method { label: label.into(), model: None, fractions: SearchFractions::default() }
    }

    pub fn model(label: impl Into<String>, model: &'a RomeModel, fractions: SearchFractions) -> Self {
        Method { label: label.into(), model: Some(model), fractions }
    }
}

#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub instance: MilpInstance,
    /// Best known objective in minimization form.
    pub bks: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub instance: String,
    pub method: String,
    /// Objective in the instance's own sense; `None` without a solution.
    pub objective: Option<f64>,
    /// `|OBJ - BKS|`, `+inf` without a solution.
    pub gap_abs: f64,
    /// `gap_abs / |BKS|`; `None` when BKS is 0.
    pub gap_rel: Option<f64>,
    pub status: String,
    pub nodes: usize,
    pub fallbacks: usize,
    /// Internal minimization-form objective, `+inf` without a solution.
    pub min_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub solved: usize,
    /// Mean over solved instances.
    pub mean_objective: f64,
    /// Mean over all instances; `+inf` if any is unsolved.
    pub mean_gap_abs: f64,
    pub mean_gap_rel: f64,
    /// Instances where the method attains the best objective (ties count for
    /// every tied method).
    pub wins: usize,
    /// Instances where some other method is strictly better.
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub instance: String,
    pub method: String,
    pub node: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<MethodSummary>,
    pub trajectories: Vec<TrajectoryPoint>,
}

impl EvalReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// `|OBJ - BKS|` and its relative form.
pub fn gaps(objective: f64, bks: f64) -> (f64, Option<f64>) {
    let abs = (objective - bks).abs();
    let rel = (bks != 0.0).then(|| abs / bks.abs());
    (abs, rel)
}

fn run_method(method: &Method, inst: &MilpInstance, limits: &Limits) -> Result<(BnbResult, usize)> {
    match method.model {
        None => Ok((branch_and_bound(inst, &Fixings::none(inst.p), None, limits)?, 0)),
        Some(model) => {
            let params = method.fractions.params_for(inst.p, limits);
            let out = predict_and_search(model, inst, &params)?;
            let fallbacks = out.fallbacks();
            Ok((out.result, fallbacks))
        }
    }
}

fn row_for(method: &Method, case: &EvalInstance, limits: &Limits) -> (EvalRow, Vec<TrajectoryPoint>) {
    let inst = &case.instance;
    let sign = if inst.maximize { -1.0 } else { 1.0 };
    match run_method(method, inst, limits) {
        Ok((res, fallbacks)) => {
            let (gap_abs, gap_rel) = if res.has_solution() { gaps(res.objective, case.bks) } else { (f64::INFINITY, None) };
            let traj = res
                .trajectory
                .iter()
                .map(|&(node, obj)| TrajectoryPoint {
                    instance: inst.name.clone(),
                    method: method.label.clone(),
                    node,
                    objective: sign * obj,
                })
                .collect();
            let row = EvalRow {
                instance: inst.name.clone(),
                method: method.label.clone(),
                objective: res.has_solution().then_some(sign * res.objective),
                gap_abs,
                gap_rel,
                status: res.status.as_str().to_string(),
                nodes: res.nodes_explored,
                fallbacks,
                min_objective: res.objective,
            };
            (row, traj)
        }
        Err(e) => {
            log::warn!("{} on {}: {e}", method.label, inst.name);
            let row = EvalRow {
                instance: inst.name.clone(),
                method: method.label.clone(),
                objective: None,
                gap_abs: f64::INFINITY,
                gap_rel: None,
                status: format!("error:{}", e.kind()),
                nodes: 0,
                fallbacks: 0,
                min_objective: f64::INFINITY,
            };
            (row, Vec::new())
        }
    }
}

/// Runs every method on every instance under the same `limits`. Failures
/// become rows with an `error:` status.
pub fn evaluate_suite(methods: &[Method], cases: &[EvalInstance], limits: &Limits) -> EvalReport {
    let per_case: Vec<Vec<(EvalRow, Vec<TrajectoryPoint>)>> = cases
        .par_iter()
        .map(|case| methods.iter().map(|m| row_for(m, case, limits)).collect())
        .collect();

    let mut summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|m| MethodSummary {
            method: m.label.clone(),
            instances: cases.len(),
            solved: 0,
            mean_objective: 0.0,
            mean_gap_abs: 0.0,
            mean_gap_rel: 0.0,
            wins: 0,
            losses: 0,
        })
        .collect();
    let mut rel_counts = vec![0usize; methods.len()];
    for case_rows in &per_case {
        let best = case_rows.iter().map(|(r, _)| r.min_objective).fold(f64::INFINITY, f64::min);
        for (s, (row, _)) in summaries.iter_mut().zip(case_rows) {
            if let Some(obj) = row.objective {
                s.solved += 1;
                s.mean_objective += obj;
            }
            s.mean_gap_abs += row.gap_abs;
            if let Some(g) = row.gap_rel {
                s.mean_gap_rel += g;
            }
            if best.is_finite() && row.min_objective <= best + TIE_TOL {
                s.wins += 1;
            } else {
                s.losses += 1;
            }
        }
        for (c, (row, _)) in rel_counts.iter_mut().zip(case_rows) {
            *c += usize::from(row.gap_rel.is_some());
        }
    }
    for (s, &rc) in summaries.iter_mut().zip(&rel_counts) {
        s.mean_objective = if s.solved > 0 { s.mean_objective / s.solved as f64 } else { f64::NAN };
        s.mean_gap_abs = if s.instances > 0 { s.mean_gap_abs / s.instances as f64 } else { 0.0 };
        s.mean_gap_rel = if rc > 0 { s.mean_gap_rel / rc as f64 } else { f64::NAN };
    }

    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for case_rows in per_case {
        for (row, traj) in case_rows {
            rows.push(row);
            trajectories.extend(traj);
        }
    }
    EvalReport { rows, summaries, trajectories }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: instance, method, objective (own sense, empty if none), gap_abs
/// (`inf` if none), gap_rel (empty when BKS is 0), status, nodes, fallbacks.
pub fn render_eval_csv(report: &EvalReport) -> String {
    let mut s = format!("{EVAL_SCHEMA}\ninstance,method,objective,gap_abs,gap_rel,status,nodes,fallbacks\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.instance,
            r.method,
            opt(r.objective),
            r.gap_abs,
            opt(r.gap_rel),
            r.status,
            r.nodes,
            r.fallbacks
        );
    }
    s
}

pub fn render_summary_csv(report: &EvalReport) -> String {
    let mut s = format!(
        "{SUMMARY_SCHEMA}\nmethod,instances,solved,mean_objective,mean_gap_abs,mean_gap_rel,wins,losses\n"
    );
    for m in &report.summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            m.method, m.instances, m.solved, m.mean_objective, m.mean_gap_abs, m.mean_gap_rel, m.wins, m.losses
        );
    }
    s
}

/// Every improving incumbent: instance, method, node count when found,
/// objective in the instance's own sense.
pub fn render_trajectory_csv(report: &EvalReport) -> String {
    let mut s = format!("{TRAJECTORY_SCHEMA}\ninstance,method,node,objective\n");
    for t in &report.trajectories {
        let _ = writeln!(s, "{},{},{},{}", t.instance, t.method, t.node, t.objective);
    }
    s
}

/// Writes `eval.csv`, `summary.csv` and `trajectory.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [
        ("eval.csv", render_eval_csv(report)),
        ("summary.csv", render_summary_csv(report)),
        ("trajectory.csv", render_trajectory_csv(report)),
    ] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
