//! Mixture-of-experts predictor: bipartite GNN encoder, gated experts over the
//! pooled task embedding, gated decoder heads, and the routing perturbation.

mod config;

pub use config::{parse_kv, ModelConfig};

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::autodiff::{Checkpoint, ParamId, ParamStore, Tape, Tensor, Var};
use crate::graph::{BipartiteGraph, CON_FEATURES, EDGE_FEATURES, VAR_FEATURES};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &str = "rome-model 1";

/// Fully connected layers with relu between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    final_relu: bool,
}

impl Mlp {
    fn build(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        widths: &[usize],
        final_relu: bool,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let weight: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            let bias: Vec<f64> = (0..fan_out).map(|_| dist.sample(rng)).collect();
            let wid = store.insert(format!("{name}.{l}.w"), Tensor::from_vec(fan_in, fan_out, weight)?)?;
            let bid = store.insert(format!("{name}.{l}.b"), Tensor::from_vec(1, fan_out, bias)?)?;
            layers.push((wid, bid));
        }
        Ok(Mlp { layers, final_relu })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            h = tape.matmul(h, wv)?;
            h = tape.add_row(h, bv)?;
            if l < last || self.final_relu {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    con_msg: Mlp,
    con_update: Mlp,
    var_msg: Mlp,
    var_update: Mlp,
}

/// Parameter handles for every learnable block.
#[derive(Debug, Clone)]
pub struct RomeParams {
    var_embed: Mlp,
    con_embed: Mlp,
    edge_embed: Mlp,
    convs: Vec<ConvLayer>,
    experts: Vec<Mlp>,
    enc_gate: Mlp,
    heads: Vec<Mlp>,
    dec_gate: Mlp,
    r: ParamId,
}

impl RomeParams {
    fn build(cfg: &ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        let d = cfg.embed_dim;
        let mut rng = seeded(seed);
        let rng = &mut rng;
        let var_embed = Mlp::build(store, rng, "embed.var", &[VAR_FEATURES, d, d], true)?;
        let con_embed = Mlp::build(store, rng, "embed.con", &[CON_FEATURES, d, d], true)?;
        let edge_embed = Mlp::build(store, rng, "embed.edge", &[EDGE_FEATURES, d, d], true)?;
        let mut convs = Vec::with_capacity(cfg.conv_layers);
        for k in 0..cfg.conv_layers {
            convs.push(ConvLayer {
                con_msg: Mlp::build(store, rng, &format!("conv{k}.con_msg"), &[3 * d, d, d], false)?,
                con_update: Mlp::build(store, rng, &format!("conv{k}.con_update"), &[2 * d, d, d], false)?,
                var_msg: Mlp::build(store, rng, &format!("conv{k}.var_msg"), &[3 * d, d, d], false)?,
                var_update: Mlp::build(store, rng, &format!("conv{k}.var_update"), &[2 * d, d, d], false)?,
            });
        }
        let experts = (0..cfg.num_experts)
            .map(|m| Mlp::build(store, rng, &format!("expert{m}"), &[d, d, d], false))
            .collect::<Result<Vec<_>>>()?;
        let enc_gate = Mlp::build(store, rng, "gate.enc", &[d, d, cfg.num_experts], false)?;
        let heads = (0..cfg.num_heads)
            .map(|h| Mlp::build(store, rng, &format!("head{h}"), &[d, d, 1], false))
            .collect::<Result<Vec<_>>>()?;
        let dec_gate = Mlp::build(store, rng, "gate.dec", &[d, d, cfg.num_heads], false)?;
        let r = store.insert("r", Tensor::scalar(cfg.r_init))?;
        Ok(RomeParams { var_embed, con_embed, edge_embed, convs, experts, enc_gate, heads, dec_gate, r })
    }
}

/// Values of one forward pass, detached from the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub marginals: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub h_g: Vec<f64>,
    pub expert_outputs: Vec<Tensor>,
    pub z: Tensor,
}

/// Tape handles of one forward pass, for building losses.
#[derive(Debug, Clone)]
pub struct TapeForward {
    /// Binary variable count.
    pub p: usize,
    /// Embeddings of all `n` variables.
    pub h: Var,
    pub h_g: Var,
    pub expert_outputs: Vec<Var>,
    pub alpha: Var,
    pub z: Var,
    pub beta: Var,
    /// Pre-sigmoid scores `σ`, `p x 1`.
    pub logits: Var,
    pub marginals: Var,
}

/// Tape handles of the perturbed routing.
#[derive(Debug, Clone)]
pub struct TapePerturbed {
    pub h_g: Var,
    pub alpha: Var,
    pub z: Var,
    /// Logits decoded from `z̃` with the perturbed decoder gate, only when
    /// `perturb_decoder_gate` is set.
    pub logits: Option<Var>,
}

/// Mean of the first `p` rows of `h`.
pub fn task_embedding(tape: &mut Tape, h: Var, p: usize) -> Result<Var> {
    if p == 0 {
        return Err(Error::Argument("task embedding needs at least one variable row".into()));
    }
    let rows = tape.slice_rows(h, 0, p)?;
    tape.mean_rows(rows)
}

/// Uniformly random unit vector in `R^d`.
pub fn sample_direction(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let delta: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= 1e-12 {
            return delta.into_iter().map(|v| v / norm).collect();
        }
    }
}

#[derive(Debug, Clone)]
pub struct RomeModel {
    config: ModelConfig,
    store: ParamStore,
    params: RomeParams,
}

impl RomeModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let params = RomeParams::build(&config, &mut store, seed)?;
        Ok(RomeModel { config, store, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Current perturbation magnitude.
    pub fn r(&self) -> f64 {
        self.store.value(self.params.r).item()
    }

    pub fn set_r(&mut self, r: f64) {
        self.store.value_mut(self.params.r).data_mut()[0] = r;
    }

    pub fn r_id(&self) -> ParamId {
        self.params.r
    }

    /// Projects `r` back onto `[0, inf)`.
    pub fn clamp_r(&mut self) {
        let r = self.r();
        if r < 0.0 {
            self.set_r(0.0);
        }
    }

    /// Variable embeddings (`n x d`) after the convolutions.
    pub fn encode(&self, tape: &mut Tape, graph: &BipartiteGraph) -> Result<Var> {
        let s = &self.store;
        let pr = &self.params;
        let d = self.config.embed_dim;
        let var_x = tape.constant(Tensor::from_rows(&graph.var_features))?;
        let con_x = tape.constant(Tensor::from_rows(&graph.con_features))?;
        let edge_rows: Vec<[f64; EDGE_FEATURES]> = graph.edges.iter().map(|e| [e.coef]).collect();
        let edge_x = tape.constant(Tensor::from_rows(&edge_rows))?;
        let ci = graph.edge_cons();
        let vj = graph.edge_vars();

        let mut hv = pr.var_embed.forward(tape, s, var_x)?;
        let mut hw = pr.con_embed.forward(tape, s, con_x)?;
        let he = pr.edge_embed.forward(tape, s, edge_x)?;
        if graph.edges.is_empty() {
            debug_assert_eq!(tape.value(he).shape(), (0, d));
        }

        for conv in &pr.convs {
            let w_e = tape.gather_rows(hw, &ci)?;
            let v_e = tape.gather_rows(hv, &vj)?;
            let input = tape.concat_cols(&[w_e, he, v_e])?;
            let msg = conv.con_msg.forward(tape, s, input)?;
            let agg = tape.scatter_add_rows(msg, &ci, graph.m)?;
            let cat = tape.concat_cols(&[hw, agg])?;
            hw = conv.con_update.forward(tape, s, cat)?;

            let w_e = tape.gather_rows(hw, &ci)?;
            let input = tape.concat_cols(&[w_e, he, v_e])?;
            let msg = conv.var_msg.forward(tape, s, input)?;
            let agg = tape.scatter_add_rows(msg, &vj, graph.n)?;
            let cat = tape.concat_cols(&[hv, agg])?;
            hv = conv.var_update.forward(tape, s, cat)?;
        }
        Ok(hv)
    }

    fn mix(&self, tape: &mut Tape, outputs: &[Var], weights: Var) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (m, &out) in outputs.iter().enumerate() {
            let w = tape.select(weights, 0, m)?;
            let term = tape.mul_scalar(out, w)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        Ok(acc.expect("at least one component"))
    }

    fn decode(&self, tape: &mut Tape, z: Var, h_g: Var) -> Result<(Var, Var)> {
        let s = &self.store;
        let gate = self.params.dec_gate.forward(tape, s, h_g)?;
        let beta = tape.softmax(gate, self.config.tau_dec)?;
        let scores = self
            .params
            .heads
            .iter()
            .map(|head| head.forward(tape, s, z))
            .collect::<Result<Vec<_>>>()?;
        let logits = self.mix(tape, &scores, beta)?;
        Ok((beta, logits))
    }

    /// Records the full forward pass on `tape`.
    pub fn forward_tape(&self, tape: &mut Tape, graph: &BipartiteGraph) -> Result<TapeForward> {
        let p = graph.p;
        if p == 0 {
            return Err(Error::Argument("instance has no binary variables".into()));
        }
        let s = &self.store;
        let h = self.encode(tape, graph)?;
        let pooled = if self.config.pool_all_vars { graph.n } else { p };
        let h_g = task_embedding(tape, h, pooled)?;
        let hp = tape.slice_rows(h, 0, p)?;
        let expert_outputs = self
            .params
            .experts
            .iter()
            .map(|e| e.forward(tape, s, hp))
            .collect::<Result<Vec<_>>>()?;
        let gate = self.params.enc_gate.forward(tape, s, h_g)?;
        let alpha = tape.softmax(gate, self.config.tau)?;
        let z = self.mix(tape, &expert_outputs, alpha)?;
        let (beta, logits) = self.decode(tape, z, h_g)?;
        let marginals = tape.sigmoid(logits)?;
        Ok(TapeForward { p, h, h_g, expert_outputs, alpha, z, beta, logits, marginals })
    }

    /// Re-routes the already computed expert outputs through a task embedding
    /// shifted by `r * direction`. `direction` must have unit norm.
    pub fn perturb_tape(&self, tape: &mut Tape, fwd: &TapeForward, direction: &[f64]) -> Result<TapePerturbed> {
        if direction.len() != self.config.embed_dim {
            return Err(Error::Shape {
                op: "perturb",
                left: (1, direction.len()),
                right: (1, self.config.embed_dim),
            });
        }
        let s = &self.store;
        let u = tape.constant(Tensor::row(direction))?;
        let r = tape.param(s, self.params.r);
        let shift = tape.mul_scalar(u, r)?;
        let h_g = tape.add(fwd.h_g, shift)?;
        let gate = self.params.enc_gate.forward(tape, s, h_g)?;
        let alpha = tape.softmax(gate, self.config.tau)?;
        let z = self.mix(tape, &fwd.expert_outputs, alpha)?;
        let logits = if self.config.perturb_decoder_gate {
            Some(self.decode(tape, z, h_g)?.1)
        } else {
            None
        };
        Ok(TapePerturbed { h_g, alpha, z, logits })
    }

    pub fn forward(&self, graph: &BipartiteGraph) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let f = self.forward_tape(&mut tape, graph)?;
        Ok(ForwardOutput {
            marginals: tape.value(f.marginals).data().to_vec(),
            alpha: tape.value(f.alpha).data().to_vec(),
            beta: tape.value(f.beta).data().to_vec(),
            h_g: tape.value(f.h_g).data().to_vec(),
            expert_outputs: f.expert_outputs.iter().map(|&v| tape.value(v).clone()).collect(),
            z: tape.value(f.z).clone(),
        })
    }

    /// Marginal predictions for the binary variables.
    pub fn predict(&self, graph: &BipartiteGraph) -> Result<Vec<f64>> {
        Ok(self.forward(graph)?.marginals)
    }

    /// Returns `(z, z̃)` under a random unit perturbation of the task embedding.
    pub fn perturb_and_forward(&self, graph: &BipartiteGraph, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
        let dir = sample_direction(rng, self.config.embed_dim);
        let mut tape = Tape::new();
        let f = self.forward_tape(&mut tape, graph)?;
        let pt = self.perturb_tape(&mut tape, &f, &dir)?;
        Ok((tape.value(f.z).clone(), tape.value(pt.z).clone()))
    }

    fn header(&self) -> String {
        format!("{CHECKPOINT_MAGIC}\n{}", self.config.to_kv())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(self.header(), &self.store)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let body = ckpt
            .header
            .strip_prefix(CHECKPOINT_MAGIC)
            .ok_or_else(|| Error::Checkpoint("not a model checkpoint".into()))?;
        let config = ModelConfig::from_kv(body)?;
        let mut model = RomeModel::new(config, 0)?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests;
