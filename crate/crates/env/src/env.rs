use std::collections::VecDeque;

use isac_reward_dsl::{evaluate, EvalError, FeatureMap, RewardExpr};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::beamforming::{crb_angle, per_user_rates, project_power, BeamformerAction, CrbError};
use crate::channel::{evolve_channels, sample_channels, ChannelState};
use crate::config::{ConfigError, SystemConfig};

/// CRB value reported when the target is unobservable, rad².
pub const CRB_CAP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step called before reset")]
    NotReset,
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("action has {got} entries, expected {expected}")]
    ActionShape { got: usize, expected: usize },
    #[error("action entry {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("reward evaluation failed: {0}")]
    Reward(#[from] EvalError),
}

/// `H` stacked frames, oldest first. Each frame is
/// `[Re h (NK), Im h (NK), Re W_prev (NK), Im W_prev (NK), rate_prev, log10(crb_prev), t/T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub rate_bps_hz: f64,
    /// Angle CRB, clamped to [`CRB_CAP`].
    pub crb: f64,
    pub crb_unobservable: bool,
    pub reward: f64,
    pub done: bool,
    pub info: FeatureMap,
    /// The precoder actually transmitted, after power projection.
    pub executed: BeamformerAction,
}

/// Episodic environment. Owns its random stream; independent instances
/// share nothing.
#[derive(Debug, Clone)]
pub struct IsacEnv {
    config: SystemConfig,
    rng: ChaCha8Rng,
    channels: Option<ChannelState>,
    frames: VecDeque<Vec<f64>>,
    step_index: usize,
}

impl IsacEnv {
    pub fn new(config: SystemConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(IsacEnv {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            channels: None,
            frames: VecDeque::new(),
            step_index: 0,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    /// Current channels; `None` before the first reset.
    pub fn channels(&self) -> Option<&ChannelState> {
        self.channels.as_ref()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.config.episode_len
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = sample_channels(&self.config, &mut self.rng);
        self.step_index = 0;
        self.frames.clear();
        let nk = self.config.n_antennas * self.config.n_users;
        let mut frame = channels.flatten();
        frame.resize(self.config.frame_dim(), 0.0);
        debug_assert_eq!(frame.len(), 4 * nk + 3);
        self.frames.push_back(frame);
        self.channels = Some(channels);
        self.observation()
    }

    pub fn step(&mut self, action: &[f64], reward: &RewardExpr) -> Result<StepOutcome, EnvError> {
        let channels = self.channels.as_ref().ok_or(EnvError::NotReset)?;
        if self.is_done() {
            return Err(EnvError::EpisodeFinished);
        }
        let expected = self.config.action_dim();
        if action.len() != expected {
            return Err(EnvError::ActionShape { got: action.len(), expected });
        }
        if let Some(index) = action.iter().position(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteAction { index });
        }

        let (n, k) = (self.config.n_antennas, self.config.n_users);
        let p_max = self.config.p_max_watts();
        let executed = project_power(BeamformerAction::from_raw(action, n, k).w, p_max);
        let rates = per_user_rates(channels, &executed, self.config.noise_power);
        let rate: f64 = rates.iter().sum();
        let (crb, crb_unobservable) = match crb_angle(channels, &executed, &self.config) {
            Ok(v) => (v.min(CRB_CAP), false),
            Err(CrbError::Unobservable) => (CRB_CAP, true),
        };
        let power_used = executed.power();
        let step_after = self.step_index + 1;
        let info = FeatureMap {
            rate,
            crb,
            log10_crb: crb.log10(),
            min_user_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
            power_used,
            power_budget: p_max,
            power_ratio: (power_used / p_max).clamp(0.0, 1.0),
            step_frac: step_after as f64 / self.config.episode_len as f64,
        };
        let reward = evaluate(reward, &info)?;

        let next = evolve_channels(channels, &self.config, &mut self.rng);
        let mut frame = next.flatten();
        frame.extend(executed.to_raw());
        frame.extend([rate, info.log10_crb, info.step_frac]);
        self.frames.push_back(frame);
        if self.frames.len() > self.config.history_len {
            self.frames.pop_front();
        }
        self.channels = Some(next);
        self.step_index = step_after;

        Ok(StepOutcome {
            observation: self.observation(),
            rate_bps_hz: rate,
            crb,
            crb_unobservable,
            reward,
            done: self.is_done(),
            info,
            executed,
        })
    }

    fn observation(&self) -> Observation {
        let frame = self.config.frame_dim();
        let h = self.config.history_len;
        let mut features = vec![0.0; h * frame];
        let missing = h - self.frames.len();
        for (i, f) in self.frames.iter().enumerate() {
            let start = (missing + i) * frame;
            features[start..start + frame].copy_from_slice(f);
        }
        Observation { features }
    }
}
