use std::fs;
use std::path::Path;

use isac_env::SystemConfig;
use serde::{Deserialize, Serialize};

use crate::actor::ActorNet;
use crate::config::TrainerConfig;
use crate::error::AgentError;
use crate::normalizer::ObsNormalizer;
use crate::policy::LearnedPolicy;

pub const CHECKPOINT_FORMAT: &str = "isac-agent-checkpoint/1";

/// Self-describing JSON snapshot of a trained actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub policy_name: String,
    /// Environment step of the evaluation that selected this actor.
    pub env_step: Option<usize>,
    pub reward: String,
    pub system: SystemConfig,
    pub trainer: TrainerConfig,
    pub normalizer: ObsNormalizer,
    pub actor: ActorNet,
}

impl Checkpoint {
    pub fn new(policy: &LearnedPolicy, env_step: Option<usize>, reward: &str, system: &SystemConfig, trainer: &TrainerConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            policy_name: policy.name.clone(),
            env_step,
            reward: reward.to_string(),
            system: system.clone(),
            trainer: trainer.clone(),
            normalizer: policy.normalizer.clone(),
            actor: policy.actor.clone(),
        }
    }

    pub fn policy(&self) -> LearnedPolicy {
        LearnedPolicy { name: self.policy_name.clone(), actor: self.actor.clone(), normalizer: self.normalizer.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(AgentError::Checkpoint(format!("unsupported format `{}`", c.format)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }
}
