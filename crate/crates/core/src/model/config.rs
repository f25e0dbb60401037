use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_experts: usize,
    pub num_heads: usize,
    pub conv_layers: usize,
    /// Encoder gate temperature.
    pub tau: f64,
    /// Decoder gate temperature.
    pub tau_dec: f64,
    pub r_init: f64,
    /// Pool the task embedding over all variables instead of the binaries.
    pub pool_all_vars: bool,
    /// Also perturb the decoder gate and add a logit-consistency term.
    pub perturb_decoder_gate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            num_experts: 3,
            num_heads: 3,
            conv_layers: 2,
            tau: 1.0,
            tau_dec: 1.0,
            r_init: 0.1,
            pool_all_vars: false,
            perturb_decoder_gate: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_experts == 0 || self.num_heads == 0 {
            return Err(Error::Config("embed_dim, num_experts and num_heads must be >= 1".into()));
        }
        if !(self.tau > 0.0) || !(self.tau_dec > 0.0) {
            return Err(Error::Config("gate temperatures must be > 0".into()));
        }
        if !(self.r_init >= 0.0) {
            return Err(Error::Config("r_init must be >= 0".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "embed_dim={}", self.embed_dim);
        let _ = writeln!(s, "num_experts={}", self.num_experts);
        let _ = writeln!(s, "num_heads={}", self.num_heads);
        let _ = writeln!(s, "conv_layers={}", self.conv_layers);
        let _ = writeln!(s, "tau={}", self.tau);
        let _ = writeln!(s, "tau_dec={}", self.tau_dec);
        let _ = writeln!(s, "r_init={}", self.r_init);
        let _ = writeln!(s, "pool_all_vars={}", self.pool_all_vars);
        let _ = writeln!(s, "perturb_decoder_gate={}", self.perturb_decoder_gate);
        s
    }

    /// Applies recognized keys from `kv`, leaving others untouched. Returns
    /// the keys that were consumed.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<Vec<String>> {
        let mut used = Vec::new();
        for (k, v) in kv {
            let bad = || Error::Config(format!("invalid value `{v}` for `{k}`"));
            match k.as_str() {
                "embed_dim" => self.embed_dim = v.parse().map_err(|_| bad())?,
                "num_experts" => self.num_experts = v.parse().map_err(|_| bad())?,
                "num_heads" => self.num_heads = v.parse().map_err(|_| bad())?,
                "conv_layers" => self.conv_layers = v.parse().map_err(|_| bad())?,
                "tau" => self.tau = v.parse().map_err(|_| bad())?,
                "tau_dec" => self.tau_dec = v.parse().map_err(|_| bad())?,
                "r_init" => self.r_init = v.parse().map_err(|_| bad())?,
                "pool_all_vars" => self.pool_all_vars = v.parse().map_err(|_| bad())?,
                "perturb_decoder_gate" => self.perturb_decoder_gate = v.parse().map_err(|_| bad())?,
                _ => continue,
            }
            used.push(k.clone());
        }
        Ok(used)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply(&parse_kv(text)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flat `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
