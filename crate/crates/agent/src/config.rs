use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("trainer.{key}: {message}")]
pub struct TrainerConfigError {
    pub key: &'static str,
    pub message: String,
}

/// Learner hyperparameters. The defaults are declared choices for a
/// desk-scale run, not tuned values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Transformer width.
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward width inside each encoder layer.
    pub d_ff: usize,
    pub n_experts: usize,
    /// Hidden width of each expert head.
    pub expert_hidden: usize,
    /// Hidden width of both layers of the MLP baseline actor.
    pub mlp_hidden: usize,
    /// Hidden width of both layers of each critic.
    pub critic_hidden: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Environment steps of uniform exploration before the first update.
    pub warmup_steps: usize,
    pub capacity: usize,
    /// `None` means `−action_dim`.
    pub target_entropy: Option<f64>,
    pub alpha_init: f64,
    pub learn_alpha: bool,
    pub total_env_steps: usize,
    /// Gradient updates after every environment step once warm.
    pub updates_per_step: usize,
    pub eval_period: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Episode ends are time limits: keep bootstrapping through them.
    pub bootstrap_time_limit: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            n_experts: 4,
            expert_hidden: 64,
            mlp_hidden: 128,
            critic_hidden: 256,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            gamma: 0.95,
            tau: 0.005,
            batch_size: 256,
            warmup_steps: 1000,
            capacity: 100_000,
            target_entropy: None,
            alpha_init: 0.01,
            learn_alpha: true,
            total_env_steps: 50_000,
            updates_per_step: 1,
            eval_period: 5_000,
            eval_episodes: 5,
            seed: 0,
            bootstrap_time_limit: true,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerConfigError> {
        let err = |key, message: &str| Err(TrainerConfigError { key, message: message.to_string() });
        let positive = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("n_experts", self.n_experts),
            ("expert_hidden", self.expert_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("critic_hidden", self.critic_hidden),
            ("batch_size", self.batch_size),
            ("capacity", self.capacity),
            ("updates_per_step", self.updates_per_step),
            ("eval_period", self.eval_period),
            ("eval_episodes", self.eval_episodes),
        ];
        for (key, v) in positive {
            if v == 0 {
                return err(key, "must be positive");
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return err("n_heads", "must divide d_model");
        }
        for (key, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic), ("lr_alpha", self.lr_alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return err(key, "must be a positive number");
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return err("gamma", "must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return err("tau", "must lie in (0, 1]");
        }
        if !(self.alpha_init.is_finite() && self.alpha_init > 0.0) {
            return err("alpha_init", "must be a positive number");
        }
        if self.target_entropy.is_some_and(|t| !t.is_finite()) {
            return err("target_entropy", "must be finite");
        }
        if self.capacity < self.batch_size {
            return err("capacity", "must hold at least one batch");
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }
}
