//! Soft actor-critic update.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::actor::{gate_entropy, squashed_sample, ActorNet};
use crate::config::TrainerConfig;
use crate::critic::CriticPair;
use crate::error::AgentError;
use crate::graph::Graph;
use crate::memory::Transition;
use crate::normalizer::ObsNormalizer;
use crate::params::{Adam, ScalarAdam};
use crate::tensor::Matrix;

/// Normalised minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    /// 1.0 where bootstrapping stops.
    pub terminal: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition], norm: &ObsNormalizer) -> Self {
        let a = items[0].action.len();
        Batch {
            obs: norm.batch(items.iter().map(|t| t.obs.as_slice())),
            actions: Matrix::from_vec(items.len(), a, items.iter().flat_map(|t| t.action.iter().copied()).collect()),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_obs: norm.batch(items.iter().map(|t| t.next_obs.as_slice())),
            terminal: items.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Standard-normal noise of the given shape.
pub fn gaussian_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `r + γ·(1−done)·(min Q′(s′, a′) − α·log π(a′|s′))` with `a′` drawn from
/// the current actor using `noise`.
pub fn critic_targets(actor: &ActorNet, critics: &CriticPair, batch: &Batch, alpha: f64, gamma: f64, noise: &Matrix) -> Vec<f64> {
    let (mut g, out) = actor.evaluate(&batch.next_obs);
    let (a, logp) = squashed_sample(&mut g, &out, noise);
    let q = critics.target_min(&batch.next_obs, g.value(a));
    let logp = &g.value(logp).data;
    (0..batch.len())
        .map(|i| batch.rewards[i] + gamma * (1.0 - batch.terminal[i]) * (q[i] - alpha * logp[i]))
        .collect()
}

/// `mean((Q₁−y)²) + mean((Q₂−y)²)` and its gradient over the online
/// critic parameters.
pub fn critic_loss_and_grads(critics: &CriticPair, batch: &Batch, targets: &[f64]) -> (f64, Vec<Matrix>) {
    let mut g = Graph::new();
    let p = critics.params.bind(&mut g, true);
    let obs = g.constant(batch.obs.clone());
    let act = g.constant(batch.actions.clone());
    let y = g.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec()));
    let (q1, q2) = critics.forward(&mut g, &p, obs, act);
    let d1 = g.sub(q1, y);
    let d1 = g.square(d1);
    let l1 = g.mean(d1);
    let d2 = g.sub(q2, y);
    let d2 = g.square(d2);
    let l2 = g.mean(d2);
    let loss = g.add(l1, l2);
    g.backward(loss);
    (g.value(loss).scalar(), p.grads(&g, &critics.params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<Matrix>,
    pub mean_log_prob: f64,
    pub gate_entropy: f64,
}

/// `mean(α·log π(a|s) − min Q(s, a))` with `a` reparameterised through
/// `noise`; gradients over the actor parameters only.
pub fn actor_loss_and_grads(actor: &ActorNet, critics: &CriticPair, obs: &Matrix, alpha: f64, noise: &Matrix) -> ActorLoss {
    let mut g = Graph::new();
    let pa = actor.params().bind(&mut g, true);
    let pc = critics.params.bind(&mut g, false);
    let out = actor.forward(&mut g, &pa, obs);
    let (a, logp) = squashed_sample(&mut g, &out, noise);
    let o = g.constant(obs.clone());
    let (q1, q2) = critics.forward(&mut g, &pc, o, a);
    let q = g.min(q1, q2);
    let weighted = g.scale(logp, alpha);
    let diff = g.sub(weighted, q);
    let loss = g.mean(diff);
    g.backward(loss);
    let lp = g.value(logp);
    ActorLoss {
        loss: g.value(loss).scalar(),
        grads: pa.grads(&g, actor.params()),
        mean_log_prob: lp.data.iter().sum::<f64>() / lp.len() as f64,
        gate_entropy: out.gates.map_or(0.0, |gv| gate_entropy(g.value(gv))),
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    /// `−mean log π` of the actor's fresh samples.
    pub entropy: f64,
    pub gate_entropy: f64,
    pub alpha: f64,
}

impl LossReport {
    fn all_finite(&self) -> bool {
        [self.critic_loss, self.actor_loss, self.alpha_loss, self.entropy, self.gate_entropy, self.alpha]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Actor, critics, optimisers and temperature.
#[derive(Debug, Clone)]
pub struct SacLearner {
    pub actor: ActorNet,
    pub critics: CriticPair,
    actor_opt: Adam,
    critic_opt: Adam,
    alpha_opt: ScalarAdam,
    pub log_alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub learn_alpha: bool,
    updates: u64,
}

impl SacLearner {
    pub fn new(actor: ActorNet, critics: CriticPair, config: &TrainerConfig) -> Self {
        let action_dim = actor.shape().action_dim;
        SacLearner {
            actor_opt: Adam::new(config.lr_actor, actor.params()),
            critic_opt: Adam::new(config.lr_critic, &critics.params),
            alpha_opt: ScalarAdam::new(config.lr_alpha),
            log_alpha: config.alpha_init.ln(),
            gamma: config.gamma,
            tau: config.tau,
            target_entropy: config.target_entropy_for(action_dim),
            learn_alpha: config.learn_alpha,
            updates: 0,
            actor,
            critics,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One critic, actor and temperature step followed by a Polyak update
    /// of the target critics.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<LossReport, AgentError> {
        let a = self.actor.shape().action_dim;
        let alpha = self.alpha();

        let next_noise = gaussian_noise(batch.len(), a, rng);
        let targets = critic_targets(&self.actor, &self.critics, batch, alpha, self.gamma, &next_noise);
        let (critic_loss, critic_grads) = critic_loss_and_grads(&self.critics, batch, &targets);

        if !critic_loss.is_finite() || !critic_grads.iter().all(Matrix::all_finite) {
            let report = LossReport { critic_loss, actor_loss: f64::NAN, alpha_loss: f64::NAN, entropy: f64::NAN, gate_entropy: f64::NAN, alpha };
            return Err(AgentError::NonFiniteLoss { update: self.updates, report });
        }
        self.critic_opt.step(&mut self.critics.params, &critic_grads);

        let noise = gaussian_noise(batch.len(), a, rng);
        let actor = actor_loss_and_grads(&self.actor, &self.critics, &batch.obs, alpha, &noise);

        let alpha_grad = -(actor.mean_log_prob + self.target_entropy);
        let report = LossReport {
            critic_loss,
            actor_loss: actor.loss,
            alpha_loss: -self.log_alpha * (actor.mean_log_prob + self.target_entropy),
            entropy: -actor.mean_log_prob,
            gate_entropy: actor.gate_entropy,
            alpha,
        };
        if !report.all_finite() || !actor.grads.iter().all(Matrix::all_finite) {
            return Err(AgentError::NonFiniteLoss { update: self.updates, report });
        }

        self.actor_opt.step(self.actor.params_mut(), &actor.grads);
        if self.learn_alpha {
            self.alpha_opt.step(&mut self.log_alpha, alpha_grad);
        }
        self.critics.soft_update(self.tau);
        self.updates += 1;
        Ok(report)
    }
}
