use isac_env::{IsacEnv, SystemConfig};
use isac_reward_dsl::RewardExpr;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AgentError;
use crate::policy::{ActMode, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub seed: u64,
    pub total_return: f64,
    /// Mean over steps of the sum rate, bits/s/Hz.
    pub mean_rate: f64,
    /// Mean over steps of the (capped) angle CRB, rad².
    pub mean_crb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    pub mean_rate: f64,
    pub mean_crb: f64,
    pub episodes: Vec<EpisodeRow>,
}

/// Reset seed of evaluation episode `i`.
pub fn eval_episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// Runs `n_episodes` full episodes in deterministic action mode. Episode
/// `i` resets with [`eval_episode_seed`]; policies that draw randomness
/// use a stream seeded from `seed`.
pub fn evaluate_policy(
    policy: &dyn Policy,
    system: &SystemConfig,
    reward: &RewardExpr,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport, AgentError> {
    assert!(n_episodes >= 1, "at least one evaluation episode");
    let mut env = IsacEnv::new(system.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let ep_seed = eval_episode_seed(seed, i);
        let mut obs = env.reset(ep_seed);
        let (mut total, mut rate, mut crb, mut steps) = (0.0, 0.0, 0.0, 0usize);
        loop {
            let action = policy.act(&obs, ActMode::Deterministic, &mut rng)?;
            let out = env.step(&action, reward)?;
            total += out.reward;
            rate += out.rate_bps_hz;
            crb += out.crb;
            steps += 1;
            if out.done {
                break;
            }
            obs = out.observation;
        }
        let n = steps as f64;
        episodes.push(EpisodeRow { episode: i, seed: ep_seed, total_return: total, mean_rate: rate / n, mean_crb: crb / n });
    }
    let m = episodes.len() as f64;
    Ok(EvalReport {
        mean_return: episodes.iter().map(|e| e.total_return).sum::<f64>() / m,
        mean_rate: episodes.iter().map(|e| e.mean_rate).sum::<f64>() / m,
        mean_crb: episodes.iter().map(|e| e.mean_crb).sum::<f64>() / m,
        episodes,
    })
}
