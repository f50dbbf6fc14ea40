//! Policy networks and the tanh-squashed Gaussian they parameterise.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainerConfig;
use crate::graph::{Graph, Var};
use crate::layers::{LayerNorm, Linear, Mlp};
use crate::params::{Bound, ParamSet};
use crate::tensor::Matrix;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Gain of the output layers, small so the initial policy is near
/// `tanh(0)` with unit spread.
const HEAD_GAIN: f64 = 0.1;

/// Observation and action sizes an actor is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorShape {
    pub frame_dim: usize,
    pub history: usize,
    pub action_dim: usize,
}

impl ActorShape {
    pub fn obs_dim(&self) -> usize {
        self.frame_dim * self.history
    }
}

/// Pre-squash Gaussian parameters, `batch × action_dim` each.
#[derive(Debug, Clone, Copy)]
pub struct ActorOutput {
    pub mean: Var,
    pub log_std: Var,
    /// `batch × E` mixture weights; absent for the MLP actor.
    pub gates: Option<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EncoderLayer {
    norm1: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Frame embedding, sinusoidal positions, pre-norm transformer encoder,
/// softmax gate and `E` MLP experts fused by the gate weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeActor {
    pub shape: ActorShape,
    pub d_model: usize,
    pub n_heads: usize,
    pub params: ParamSet,
    embed: Linear,
    layers: Vec<EncoderLayer>,
    final_norm: LayerNorm,
    gate: Linear,
    experts: Vec<Mlp>,
}

/// Sinusoidal position table, `history × d_model`.
pub fn positional_encoding(history: usize, d_model: usize) -> Matrix {
    Matrix::from_fn(history, d_model, |pos, i| {
        let rate = 10000f64.powf((2 * (i / 2)) as f64 / d_model as f64);
        let angle = pos as f64 / rate;
        if i % 2 == 0 { angle.sin() } else { angle.cos() }
    })
}

impl MoeActor {
    pub fn new(shape: ActorShape, config: &TrainerConfig, rng: &mut impl Rng) -> Self {
        let d = config.d_model;
        let mut params = ParamSet::new();
        let embed = Linear::new(&mut params, "embed", shape.frame_dim, d, 1.0, rng);
        let layers = (0..config.n_layers)
            .map(|l| {
                let n = |s: &str| format!("enc{l}.{s}");
                EncoderLayer {
                    norm1: LayerNorm::new(&mut params, &n("norm1"), d),
                    wq: Linear::new(&mut params, &n("wq"), d, d, 1.0, rng),
                    wk: Linear::new(&mut params, &n("wk"), d, d, 1.0, rng),
                    wv: Linear::new(&mut params, &n("wv"), d, d, 1.0, rng),
                    wo: Linear::new(&mut params, &n("wo"), d, d, 1.0, rng),
                    norm2: LayerNorm::new(&mut params, &n("norm2"), d),
                    ff1: Linear::new(&mut params, &n("ff1"), d, config.d_ff, 2f64.sqrt(), rng),
                    ff2: Linear::new(&mut params, &n("ff2"), config.d_ff, d, 1.0, rng),
                }
            })
            .collect();
        let final_norm = LayerNorm::new(&mut params, "final_norm", d);
        let gate = Linear::new(&mut params, "gate", d, config.n_experts, HEAD_GAIN, rng);
        let experts = (0..config.n_experts)
            .map(|e| {
                let widths = [d, config.expert_hidden, 2 * shape.action_dim];
                Mlp::new(&mut params, &format!("expert{e}"), &widths, HEAD_GAIN, rng)
            })
            .collect();
        MoeActor { shape, d_model: d, n_heads: config.n_heads, params, embed, layers, final_norm, gate, experts }
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    /// `obs` is `batch × (history·frame_dim)`, frames oldest first.
    pub fn forward(&self, g: &mut Graph, p: &Bound, obs: &Matrix) -> ActorOutput {
        let (h, f, d) = (self.shape.history, self.shape.frame_dim, self.d_model);
        assert_eq!(obs.cols, h * f, "observation width");
        let batch = obs.rows;
        // Row-major storage makes the batch×(H·F) block a (batch·H)×F block.
        let frames = g.constant(Matrix { rows: batch * h, cols: f, data: obs.data.clone() });
        let pe = positional_encoding(h, d);
        let mut tiled = Matrix::zeros(batch * h, d);
        for b in 0..batch {
            tiled.data[b * h * d..(b + 1) * h * d].copy_from_slice(&pe.data);
        }
        let pe = g.constant(tiled);
        let x = self.embed.forward(g, p, frames);
        let mut x = g.add(x, pe);
        for layer in &self.layers {
            let y = layer.norm1.forward(g, p, x);
            let q = layer.wq.forward(g, p, y);
            let k = layer.wk.forward(g, p, y);
            let v = layer.wv.forward(g, p, y);
            let a = g.attention(q, k, v, h, self.n_heads);
            let a = layer.wo.forward(g, p, a);
            x = g.add(x, a);
            let y = layer.norm2.forward(g, p, x);
            let y = layer.ff1.forward(g, p, y);
            let y = g.relu(y);
            let y = layer.ff2.forward(g, p, y);
            x = g.add(x, y);
        }
        let x = self.final_norm.forward(g, p, x);
        let last = g.rows(x, (0..batch).map(|b| b * h + h - 1).collect());

        let logits = self.gate.forward(g, p, last);
        let gates = g.softmax_rows(logits);
        let a = self.shape.action_dim;
        let mut mean = None;
        let mut log_std = None;
        for (e, expert) in self.experts.iter().enumerate() {
            let out = expert.forward(g, p, last);
            let w = g.slice_cols(gates, e, 1);
            let mu = g.slice_cols(out, 0, a);
            let mu = g.mul_col(mu, w);
            let ls = g.slice_cols(out, a, a);
            let ls = g.mul_col(ls, w);
            mean = Some(match mean {
                Some(m) => g.add(m, mu),
                None => mu,
            });
            log_std = Some(match log_std {
                Some(s) => g.add(s, ls),
                None => ls,
            });
        }
        let log_std = g.clamp(log_std.expect("at least one expert"), LOG_STD_MIN, LOG_STD_MAX);
        ActorOutput { mean: mean.expect("at least one expert"), log_std, gates: Some(gates) }
    }
}

/// Two-hidden-layer MLP over the flattened observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpActor {
    pub shape: ActorShape,
    pub params: ParamSet,
    net: Mlp,
}

impl MlpActor {
    pub fn new(shape: ActorShape, config: &TrainerConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let widths = [shape.obs_dim(), config.mlp_hidden, config.mlp_hidden, 2 * shape.action_dim];
        let net = Mlp::new(&mut params, "mlp", &widths, HEAD_GAIN, rng);
        MlpActor { shape, params, net }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, obs: &Matrix) -> ActorOutput {
        assert_eq!(obs.cols, self.shape.obs_dim(), "observation width");
        let x = g.constant(obs.clone());
        let out = self.net.forward(g, p, x);
        let a = self.shape.action_dim;
        let mean = g.slice_cols(out, 0, a);
        let log_std = g.slice_cols(out, a, a);
        let log_std = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        ActorOutput { mean, log_std, gates: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    TransformerMoe,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActorNet {
    TransformerMoe(MoeActor),
    Mlp(MlpActor),
}

impl ActorNet {
    pub fn new(kind: ActorKind, shape: ActorShape, config: &TrainerConfig, rng: &mut impl Rng) -> Self {
        match kind {
            ActorKind::TransformerMoe => ActorNet::TransformerMoe(MoeActor::new(shape, config, rng)),
            ActorKind::Mlp => ActorNet::Mlp(MlpActor::new(shape, config, rng)),
        }
    }

    pub fn kind(&self) -> ActorKind {
        match self {
            ActorNet::TransformerMoe(_) => ActorKind::TransformerMoe,
            ActorNet::Mlp(_) => ActorKind::Mlp,
        }
    }

    pub fn shape(&self) -> ActorShape {
        match self {
            ActorNet::TransformerMoe(a) => a.shape,
            ActorNet::Mlp(a) => a.shape,
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            ActorNet::TransformerMoe(a) => &a.params,
            ActorNet::Mlp(a) => &a.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            ActorNet::TransformerMoe(a) => &mut a.params,
            ActorNet::Mlp(a) => &mut a.params,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().count()
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, obs: &Matrix) -> ActorOutput {
        match self {
            ActorNet::TransformerMoe(a) => a.forward(g, p, obs),
            ActorNet::Mlp(a) => a.forward(g, p, obs),
        }
    }

    /// Forward pass with frozen parameters.
    pub fn evaluate(&self, obs: &Matrix) -> (Graph, ActorOutput) {
        let mut g = Graph::new();
        let p = self.params().bind(&mut g, false);
        let out = self.forward(&mut g, &p, obs);
        (g, out)
    }
}

/// Squashed sample `a = tanh(μ + σ·ε)` and its log-density, `batch × 1`.
pub fn squashed_sample(g: &mut Graph, out: &ActorOutput, noise: &Matrix) -> (Var, Var) {
    let eps = g.constant(noise.clone());
    let std = g.exp(out.log_std);
    let spread = g.mul(std, eps);
    let u = g.add(out.mean, spread);
    let action = g.tanh(u);

    let a = noise.cols as f64;
    let gauss = Matrix::from_fn(noise.rows, 1, |r, _| {
        -0.5 * noise.row(r).iter().map(|e| e * e).sum::<f64>() - 0.5 * a * (2.0 * PI).ln()
    });
    let gauss = g.constant(gauss);
    let ls = g.sum_cols(out.log_std);
    let base = g.sub(gauss, ls);
    // ln(1 − tanh²u) = 2·(ln 2 − u − softplus(−2u))
    let m2u = g.scale(u, -2.0);
    let sp = g.softplus(m2u);
    let t = g.add(u, sp);
    let t = g.scale(t, -2.0);
    let t = g.offset(t, 2.0 * LN_2);
    let corr = g.sum_cols(t);
    let logp = g.sub(base, corr);
    (action, logp)
}

/// Scalar log-density of the squashed Gaussian at pre-squash noise `eps`.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], eps: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((m, ls), e) in mean.iter().zip(log_std).zip(eps) {
        let u = m + ls.exp() * e;
        let softplus = (-2.0 * u).max(0.0) + (-(2.0 * u).abs()).exp().ln_1p();
        lp += -0.5 * e * e - ls - 0.5 * (2.0 * PI).ln() - 2.0 * (LN_2 - u - softplus);
    }
    lp
}

/// Mean entropy `−Σ g ln g` of the gate rows.
pub fn gate_entropy(gates: &Matrix) -> f64 {
    let mut total = 0.0;
    for r in 0..gates.rows {
        total -= gates.row(r).iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    }
    total / gates.rows as f64
}
