//! Group-DRO training across instance domains: sample a domain by its
//! weight, fit a minibatch from it, and shift weight toward domains whose
//! loss stays high.

mod config;

pub use config::{DomainSpec, TrainConfig};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape};
use crate::graph::{encode, BipartiteGraph};
use crate::instances::read_instance;
use crate::losses::{bce_value, total_loss, BceReduction};
use crate::model::{sample_direction, RomeModel};
use crate::rng::{derive_seed, seeded, Rng};
use crate::solver::SolutionPool;
use crate::{Error, Result};

/// Version tag written as the first line of every training log.
pub const LOG_SCHEMA: &str = "# rome-train-log v1";
const LOG_COLUMNS: &str = "kind,epoch,step,domain,loss_total,loss_bce,loss_div,loss_robust,r,q,val_bce";

/// A probability vector over domains.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainWeights(Vec<f64>);

impl DomainWeights {
    pub fn uniform(k: usize) -> Self {
        DomainWeights(vec![1.0 / k as f64; k])
    }

    pub fn from_vec(q: Vec<f64>) -> Result<Self> {
        let sum: f64 = q.iter().sum();
        if q.is_empty() || q.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("not a probability vector: {q:?}")));
        }
        Ok(DomainWeights(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse-CDF draw of a domain index.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, &q) in self.0.iter().enumerate() {
            acc += q;
            if u < acc {
                return k;
            }
        }
        // Rounding left the cumulative sum just under 1.
        self.0.iter().rposition(|&q| q > 0.0).unwrap_or(0)
    }
}

/// Multiplicative-weights step on entry `k`, then renormalization.
pub fn update_domain_weights(q: &DomainWeights, k: usize, loss: f64, eta: f64) -> Result<DomainWeights> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("domain {k} loss estimate is {loss}")));
    }
    if k >= q.len() {
        return Err(Error::Argument(format!("domain index {k} out of range for {} domains", q.len())));
    }
    let mut next = q.0.clone();
    next[k] *= (eta * loss).exp();
    let sum: f64 = next.iter().sum();
    if !sum.is_finite() {
        return Err(Error::Numeric("domain weights overflowed".into()));
    }
    for v in &mut next {
        *v /= sum;
    }
    Ok(DomainWeights(next))
}

/// A training or validation instance with its pool.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub graph: BipartiteGraph,
    pub pool: SolutionPool,
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

/// `*.milp` files in `dir`, sorted by name.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "milp"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_dir(dir: &Path, missing: &mut Vec<String>) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for path in instance_files(dir)? {
        let pool_path = SolutionPool::path_for(&path);
        if !pool_path.exists() {
            missing.push(path.display().to_string());
            continue;
        }
        let inst = read_instance(&path)?;
        let pool = SolutionPool::read(&pool_path, &inst)?;
        out.push(Sample { name: inst.name.clone(), graph: encode(&inst), pool });
    }
    Ok(out)
}

/// Loads every domain; instances lacking a pool file are reported together.
pub fn load_domains(specs: &[DomainSpec]) -> Result<Vec<Domain>> {
    let mut missing = Vec::new();
    let mut domains = Vec::with_capacity(specs.len());
    for s in specs {
        let train = load_dir(&s.train_dir, &mut missing)?;
        let val = load_dir(&s.val_dir, &mut missing)?;
        domains.push(Domain { name: s.name.clone(), train, val });
    }
    if !missing.is_empty() {
        return Err(Error::MissingPools(missing));
    }
    Ok(domains)
}

/// Everything needed to continue a run besides the parameters themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub q: Vec<f64>,
    pub ema: Vec<Option<f64>>,
    pub best_val: Option<f64>,
    pub epochs_since_improvement: usize,
    pub optimizer: Adam,
    pub rng: Rng,
}

impl TrainState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Losses of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub domain: usize,
    pub total: f64,
    pub bce: f64,
    pub diversity: f64,
    pub robust: f64,
    pub r: f64,
    pub q: Vec<f64>,
}

/// Validation BCE per domain and the instance-weighted aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValReport {
    pub per_domain: Vec<f64>,
    pub counts: Vec<usize>,
    pub aggregate: f64,
}

/// Mean BCE of the unperturbed model on each domain's validation set.
pub fn validate(model: &RomeModel, domains: &[Domain], reduction: BceReduction) -> Result<ValReport> {
    if domains.is_empty() {
        return Err(Error::Argument("validation needs at least one domain".into()));
    }
    let mut per_domain = Vec::with_capacity(domains.len());
    let mut counts = Vec::with_capacity(domains.len());
    let (mut num, mut den) = (0.0, 0usize);
    for d in domains {
        if d.val.is_empty() {
            return Err(Error::Argument(format!("domain `{}` has no validation instances", d.name)));
        }
        let losses = d
            .val
            .par_iter()
            .map(|s| bce_value(&model.predict(&s.graph)?, &s.pool, reduction))
            .collect::<Result<Vec<f64>>>()?;
        let sum: f64 = losses.iter().sum();
        per_domain.push(sum / losses.len() as f64);
        counts.push(losses.len());
        num += sum;
        den += losses.len();
    }
    Ok(ValReport { per_domain, counts, aggregate: num / den as f64 })
}

pub struct Trainer {
    config: TrainConfig,
    model: RomeModel,
    state: TrainState,
}

impl Trainer {
    /// Fresh model and state derived from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = RomeModel::new(config.model.clone(), derive_seed(config.seed, 0))?;
        let k = config.domains.len();
        let state = TrainState {
            step: 0,
            q: DomainWeights::uniform(k).0,
            ema: vec![None; k],
            best_val: None,
            epochs_since_improvement: 0,
            optimizer: Adam::new(model.store(), config.lr),
            rng: seeded(derive_seed(config.seed, 1)),
        };
        Ok(Trainer { config, model, state })
    }

    /// Reassembles a trainer from saved parts, checking they fit together.
    pub fn from_parts(config: TrainConfig, model: RomeModel, state: TrainState) -> Result<Self> {
        config.validate()?;
        let k = config.domains.len();
        if state.q.len() != k || state.ema.len() != k {
            return Err(Error::Checkpoint(format!("state has {} domains, config has {k}", state.q.len())));
        }
        let shapes_ok = state.optimizer.m.len() == model.store().len()
            && model.store().entries().zip(&state.optimizer.m).all(|((_, t), m)| t.shape() == m.shape());
        if !shapes_ok {
            return Err(Error::Checkpoint("optimizer state does not match model parameters".into()));
        }
        Ok(Trainer { config, model, state })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &RomeModel {
        &self.model
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_model(self) -> RomeModel {
        self.model
    }

    /// One group-DRO iteration. On error the model and state are untouched.
    pub fn step(&mut self, domains: &[Domain]) -> Result<StepLog> {
        let kd = domains.len();
        if kd != self.state.q.len() {
            return Err(Error::Argument(format!("expected {} domains, got {kd}", self.state.q.len())));
        }
        if let Some(d) = domains.iter().find(|d| d.train.is_empty()) {
            return Err(Error::Argument(format!("domain `{}` has no training instances", d.name)));
        }
        let mut rng = self.state.rng.clone();
        let q = DomainWeights(self.state.q.clone());
        let k = q.sample(&mut rng);
        let pool = &domains[k].train;
        let bs = self.config.batch_size.min(pool.len());
        let batch = rand::seq::index::sample(&mut rng, pool.len(), bs).into_vec();

        let d = self.model.config().embed_dim;
        let mut tapes = Vec::with_capacity(bs);
        let (mut total, mut bce, mut div, mut robust) = (0.0, 0.0, 0.0, 0.0);
        for &i in &batch {
            let s = &pool[i];
            let dir = sample_direction(&mut rng, d);
            let mut tape = Tape::new();
            let f = self.model.forward_tape(&mut tape, &s.graph)?;
            let pt = self.model.perturb_tape(&mut tape, &f, &dir)?;
            let terms = total_loss(&mut tape, &f, Some(&pt), &s.pool, &self.config.loss)?;
            total += terms.total_value;
            bce += terms.bce;
            div += terms.diversity;
            robust += terms.robust;
            tapes.push((tape, terms.total));
        }
        let n = bs as f64;
        let (total, bce, div, robust) = (total / n, bce / n, div / n, robust / n);

        let decay = self.config.ema_decay;
        let ema = match self.state.ema[k] {
            None => total,
            Some(prev) => decay * prev + (1.0 - decay) * total,
        };
        let q_next = update_domain_weights(&q, k, ema, self.config.eta)?;

        let scale = kd as f64 * q_next.0[k] / n;
        self.model.store_mut().zero_grad();
        for (tape, loss) in &mut tapes {
            tape.backward_scaled(*loss, scale, self.model.store_mut())?;
        }
        self.state.optimizer.step(self.model.store_mut());
        self.model.clamp_r();

        self.state.rng = rng;
        self.state.ema[k] = Some(ema);
        self.state.q = q_next.0;
        self.state.step += 1;
        Ok(StepLog {
            step: self.state.step,
            domain: k,
            total,
            bce,
            diversity: div,
            robust,
            r: self.model.r(),
            q: self.state.q.clone(),
        })
    }

    /// Writes `last.ckpt` and `state.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.save(dir.join("last.ckpt"))?;
        let path = dir.join("state.json");
        fs::write(&path, self.state.to_json()?).map_err(|e| Error::io(&path, e))
    }

    pub fn resume(config: TrainConfig, dir: &Path) -> Result<Self> {
        let model = RomeModel::load(dir.join("last.ckpt"))?;
        if model.config() != &config.model {
            return Err(Error::Checkpoint("saved model config differs from the training config".into()));
        }
        let path = dir.join("state.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_parts(config, model, TrainState::from_json(&text)?)
    }
}

/// Summary of a finished [`train`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub log: PathBuf,
    pub epochs: usize,
    pub steps: u64,
    pub initial_val: f64,
    pub best_val: f64,
    pub final_val: f64,
    pub stopped_early: bool,
}

fn join_q(q: &[f64]) -> String {
    q.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn log_val(log: &mut String, epoch: usize, step: u64, domains: &[Domain], report: &ValReport, r: f64) {
    for (d, v) in domains.iter().zip(&report.per_domain) {
        let _ = writeln!(log, "val,{epoch},{step},{},,,,,{r},,{v}", d.name);
    }
    let _ = writeln!(log, "val,{epoch},{step},all,,,,,{r},,{}", report.aggregate);
}

/// Runs training until `max_epochs`, `max_steps`, or patience runs out.
/// Writes `best.ckpt`, `last.ckpt`, `state.json` and `train_log.csv` into
/// `out_dir`.
pub fn train(config: &TrainConfig, domains: &[Domain], out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut trainer = Trainer::new(config.clone())?;
    let reduction = config.loss.bce_reduction;
    let best_path = out_dir.join("best.ckpt");
    let log_path = out_dir.join("train_log.csv");
    let mut log = format!("{LOG_SCHEMA}\n{LOG_COLUMNS}\n");

    let initial = validate(trainer.model(), domains, reduction)?;
    log_val(&mut log, 0, 0, domains, &initial, trainer.model().r());
    trainer.model().save(&best_path)?;
    trainer.state.best_val = Some(initial.aggregate);

    let total_train: usize = domains.iter().map(|d| d.train.len()).sum();
    let steps_per_epoch = total_train.div_ceil(config.batch_size).max(1);
    let step_cap = if config.max_steps == 0 { u64::MAX } else { config.max_steps as u64 };
    let mut final_val = initial.aggregate;
    let mut epochs = 0;
    let mut stopped_early = false;

    'outer: for epoch in 1..=config.max_epochs {
        for _ in 0..steps_per_epoch {
            if trainer.state.step >= step_cap {
                break;
            }
            let s = trainer.step(domains)?;
            let _ = writeln!(
                log,
                "step,{epoch},{},{},{},{},{},{},{},{},",
                s.step,
                domains[s.domain].name,
                s.total,
                s.bce,
                s.diversity,
                s.robust,
                s.r,
                join_q(&s.q)
            );
        }
        epochs = epoch;
        let report = validate(trainer.model(), domains, reduction)?;
        log_val(&mut log, epoch, trainer.state.step, domains, &report, trainer.model().r());
        final_val = report.aggregate;
        if trainer.state.best_val.is_none_or(|b| report.aggregate < b) {
            trainer.state.best_val = Some(report.aggregate);
            trainer.state.epochs_since_improvement = 0;
            trainer.model().save(&best_path)?;
        } else {
            trainer.state.epochs_since_improvement += 1;
            if trainer.state.epochs_since_improvement > config.patience {
                log::info!("early stop after epoch {epoch}");
                stopped_early = true;
                break 'outer;
            }
        }
        if trainer.state.step >= step_cap {
            break;
        }
    }

    trainer.save(out_dir)?;
    fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainOutcome {
        best_checkpoint: best_path,
        log: log_path,
        epochs,
        steps: trainer.state.step,
        initial_val: initial.aggregate,
        best_val: trainer.state.best_val.unwrap_or(initial.aggregate),
        final_val,
        stopped_early,
    })
}
