use isac_env::{Observation, SystemConfig};
use rand::{Rng, RngCore};

use crate::actor::ActorNet;
use crate::error::AgentError;
use crate::normalizer::ObsNormalizer;
use crate::sac::gaussian_noise;
use crate::tensor::Matrix;

/// Largest action magnitude emitted, keeping entries inside `(−1, 1)`.
const ACTION_LIMIT: f64 = 1.0 - f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Maps an observation to a raw action in `[−1, 1]^{2NK}`.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn act(&self, obs: &Observation, mode: ActMode, rng: &mut dyn RngCore) -> Result<Vec<f64>, AgentError>;
}

fn check_len(expected: usize, obs: &Observation) -> Result<(), AgentError> {
    if obs.len() != expected {
        return Err(AgentError::ObservationShape { expected, got: obs.len() });
    }
    Ok(())
}

/// Uniform raw actions; feasibility comes from the environment's
/// power projection.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub action_dim: usize,
}

impl RandomPolicy {
    pub fn new(system: &SystemConfig) -> Self {
        RandomPolicy { action_dim: system.action_dim() }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&self, _obs: &Observation, _mode: ActMode, rng: &mut dyn RngCore) -> Result<Vec<f64>, AgentError> {
        Ok((0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }
}

/// Maximum ratio transmission: `w_k = h_k/‖h_k‖`, read from the newest
/// frame. Every column has unit norm, so the environment's projection
/// splits the budget equally whenever `p_max ≤ K`.
#[derive(Debug, Clone)]
pub struct MrtPolicy {
    pub n_antennas: usize,
    pub n_users: usize,
    pub frame_dim: usize,
    pub obs_dim: usize,
}

impl MrtPolicy {
    pub fn new(system: &SystemConfig) -> Self {
        MrtPolicy {
            n_antennas: system.n_antennas,
            n_users: system.n_users,
            frame_dim: system.frame_dim(),
            obs_dim: system.observation_dim(),
        }
    }
}

impl Policy for MrtPolicy {
    fn name(&self) -> &str {
        "mrt"
    }

    fn act(&self, obs: &Observation, _mode: ActMode, _rng: &mut dyn RngCore) -> Result<Vec<f64>, AgentError> {
        check_len(self.obs_dim, obs)?;
        let (n, k) = (self.n_antennas, self.n_users);
        let nk = n * k;
        // The channel block uses the raw action layout: Re then Im, antenna fastest.
        let h = &obs.features[obs.len() - self.frame_dim..][..2 * nk];
        let mut action = vec![0.0; 2 * nk];
        for user in 0..k {
            let idx = |a: usize| user * n + a;
            let norm = (0..n).map(|a| h[idx(a)].powi(2) + h[nk + idx(a)].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            for a in 0..n {
                action[idx(a)] = h[idx(a)] / norm;
                action[nk + idx(a)] = h[nk + idx(a)] / norm;
            }
        }
        Ok(action)
    }
}

/// A trained actor with its frozen observation normaliser.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedPolicy {
    pub name: String,
    pub actor: ActorNet,
    pub normalizer: ObsNormalizer,
}

/// Acts with `actor` on one observation.
pub fn actor_act(
    actor: &ActorNet,
    normalizer: &ObsNormalizer,
    obs: &Observation,
    mode: ActMode,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>, AgentError> {
    let shape = actor.shape();
    check_len(shape.obs_dim(), obs)?;
    let x = Matrix::from_vec(1, shape.obs_dim(), normalizer.apply(obs.as_slice()));
    let (g, out) = actor.evaluate(&x);
    let mean = &g.value(out.mean).data;
    let action = match mode {
        ActMode::Deterministic => mean.iter().map(|m| m.tanh()).collect::<Vec<_>>(),
        ActMode::Stochastic => {
            let eps = gaussian_noise(1, shape.action_dim, rng);
            let ls = &g.value(out.log_std).data;
            (0..shape.action_dim).map(|i| (mean[i] + ls[i].exp() * eps.data[i]).tanh()).collect()
        }
    };
    Ok(action.into_iter().map(|a| a.clamp(-ACTION_LIMIT, ACTION_LIMIT)).collect())
}

impl Policy for LearnedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&self, obs: &Observation, mode: ActMode, rng: &mut dyn RngCore) -> Result<Vec<f64>, AgentError> {
        actor_act(&self.actor, &self.normalizer, obs, mode, rng)
    }
}
