use std::fmt;

use isac_env::SystemConfig;
use isac_reward_dsl::RewardExpr;

use crate::actor::ActorKind;
use crate::config::TrainerConfig;
use crate::error::AgentError;
use crate::evaluate::{evaluate_policy, EvalReport};
use crate::policy::{MrtPolicy, Policy, RandomPolicy};
use crate::train::{train, TrainOutcome};

/// Inputs of one (power, seed) cell.
#[derive(Debug, Clone, Copy)]
pub struct RunRequest<'a> {
    pub system: &'a SystemConfig,
    pub trainer: &'a TrainerConfig,
    pub reward: &'a RewardExpr,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

pub struct AgentRun {
    /// System configuration the strategy actually ran on.
    pub system: SystemConfig,
    pub policy: Box<dyn Policy>,
    /// Absent for strategies that do not learn.
    pub training: Option<TrainOutcome>,
    pub final_eval: EvalReport,
}

impl fmt::Debug for AgentRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentRun")
            .field("policy", &self.policy.name())
            .field("trained", &self.training.is_some())
            .field("final_eval", &self.final_eval)
            .finish()
    }
}

/// One way of producing a beamforming policy.
pub trait AgentStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;

    /// Adjusts the system configuration before the run; most strategies
    /// use it unchanged.
    fn system_for(&self, base: &SystemConfig) -> SystemConfig {
        base.clone()
    }

    fn run(&self, request: &RunRequest<'_>) -> Result<AgentRun, AgentError>;
}

fn finish(system: SystemConfig, policy: Box<dyn Policy>, training: Option<TrainOutcome>, request: &RunRequest<'_>) -> Result<AgentRun, AgentError> {
    let final_eval = evaluate_policy(policy.as_ref(), &system, request.reward, request.eval_episodes, request.eval_seed)?;
    Ok(AgentRun { system, policy, training, final_eval })
}

struct Learned {
    name: &'static str,
    description: &'static str,
    kind: ActorKind,
}

impl AgentStrategy for Learned {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn system_for(&self, base: &SystemConfig) -> SystemConfig {
        match self.kind {
            ActorKind::TransformerMoe => base.clone(),
            ActorKind::Mlp => SystemConfig { history_len: 1, ..base.clone() },
        }
    }

    fn run(&self, request: &RunRequest<'_>) -> Result<AgentRun, AgentError> {
        let system = self.system_for(request.system);
        let outcome = train(&system, request.reward, request.trainer, self.kind)?;
        let policy = Box::new(outcome.best.clone());
        finish(system, policy, Some(outcome), request)
    }
}

struct Heuristic {
    name: &'static str,
    description: &'static str,
    build: fn(&SystemConfig) -> Box<dyn Policy>,
}

impl AgentStrategy for Heuristic {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn run(&self, request: &RunRequest<'_>) -> Result<AgentRun, AgentError> {
        let system = self.system_for(request.system);
        let policy = (self.build)(&system);
        finish(system, policy, None, request)
    }
}

/// Strategies addressable by name.
pub struct Registry {
    strategies: Vec<Box<dyn AgentStrategy>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { strategies: Vec::new() }
    }

    /// `agentic`, `mlp_sac`, `random` and `mrt`.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register(Box::new(Learned {
            name: "agentic",
            description: "SAC with the transformer mixture-of-experts actor",
            kind: ActorKind::TransformerMoe,
        }));
        r.register(Box::new(Learned {
            name: "mlp_sac",
            description: "SAC with a two-layer MLP actor over the newest frame",
            kind: ActorKind::Mlp,
        }));
        r.register(Box::new(Heuristic {
            name: "random",
            description: "uniform random precoder, power-projected",
            build: |s| Box::new(RandomPolicy::new(s)),
        }));
        r.register(Box::new(Heuristic {
            name: "mrt",
            description: "maximum ratio transmission with equal power split",
            build: |s| Box::new(MrtPolicy::new(s)),
        }));
        r
    }

    /// Adds a strategy, replacing any with the same name.
    pub fn register(&mut self, strategy: Box<dyn AgentStrategy>) {
        self.strategies.retain(|s| s.name() != strategy.name());
        self.strategies.push(strategy);
    }

    pub fn get(&self, name: &str) -> Result<&dyn AgentStrategy, AgentError> {
        self.strategies
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| AgentError::UnknownKind(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.iter().map(|s| s.name()).collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}
