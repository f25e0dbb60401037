use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::losses::LossWeights;
use crate::model::ModelConfig;
use crate::{Error, Result};

/// One training domain: a directory of training instances and one of
/// validation instances, each `*.milp` with its `*.pool.json` beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub train_dir: PathBuf,
    pub val_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub domains: Vec<DomainSpec>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Hard cap on optimizer steps; 0 means no cap.
    pub max_steps: usize,
    pub lr: f64,
    /// Step size of the domain-weight update.
    pub eta: f64,
    /// Decay of the per-domain loss averages; 0 uses the raw batch loss.
    pub ema_decay: f64,
    /// Validation checks without improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            domains: Vec::new(),
            batch_size: 4,
            max_epochs: 2000,
            max_steps: 0,
            lr: 0.0005,
            eta: 0.01,
            ema_decay: 0.9,
            patience: 20,
            seed: 0,
            loss: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Config("at least one domain is required".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::Config("eta must be a finite value >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config("ema_decay must lie in [0, 1)".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be > 0".into()));
        }
        self.loss.validate()?;
        self.model.validate()
    }

    /// Parses the flat `key=value` format; `domain = name,train_dir,val_dir`
    /// may repeat. Relative directories resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut rest = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "domain" {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 || parts.iter().any(|s| s.is_empty()) {
                    return Err(Error::Config(format!("line {}: domain needs name,train_dir,val_dir", i + 1)));
                }
                cfg.domains.push(DomainSpec {
                    name: parts[0].to_string(),
                    train_dir: base.join(parts[1]),
                    val_dir: base.join(parts[2]),
                });
            } else if rest.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        for k in cfg.model.apply(&rest)? {
            rest.remove(&k);
        }
        for (k, v) in &rest {
            let bad = || Error::Config(format!("invalid value `{v}` for `{k}`"));
            match k.as_str() {
                "batch_size" => cfg.batch_size = v.parse().map_err(|_| bad())?,
                "max_epochs" => cfg.max_epochs = v.parse().map_err(|_| bad())?,
                "max_steps" => cfg.max_steps = v.parse().map_err(|_| bad())?,
                "lr" => cfg.lr = v.parse().map_err(|_| bad())?,
                "eta" => cfg.eta = v.parse().map_err(|_| bad())?,
                "ema_decay" => cfg.ema_decay = v.parse().map_err(|_| bad())?,
                "patience" => cfg.patience = v.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                "lambda_div" => cfg.loss.lambda_div = v.parse().map_err(|_| bad())?,
                "lambda_robust" => cfg.loss.lambda_robust = v.parse().map_err(|_| bad())?,
                "bce_reduction" => cfg.loss.bce_reduction = v.parse()?,
                _ => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Renders every field; `parse` of the result restores the config.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for d in &self.domains {
            let _ = writeln!(s, "domain={},{},{}", d.name, d.train_dir.display(), d.val_dir.display());
        }
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "max_epochs={}", self.max_epochs);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "eta={}", self.eta);
        let _ = writeln!(s, "ema_decay={}", self.ema_decay);
        let _ = writeln!(s, "patience={}", self.patience);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "lambda_div={}", self.loss.lambda_div);
        let _ = writeln!(s, "lambda_robust={}", self.loss.lambda_robust);
        let _ = writeln!(s, "bce_reduction={}", self.loss.bce_reduction.as_str());
        s.push_str(&self.model.to_kv());
        s
    }
}
