//! Learning agents for the ISAC beamforming environment.
//!
//! The main learner is soft actor-critic whose actor encodes the stacked
//! observation frames with a small transformer and fuses several expert
//! heads through a softmax gate ([`MoeActor`]). Gradients come from the
//! reverse-mode [`Graph`] in this crate. Baselines are the same learner
//! with an MLP actor, a uniform random precoder and maximum ratio
//! transmission; all four are reachable by name through [`Registry`].

mod actor;
mod checkpoint;
mod config;
mod critic;
mod error;
mod evaluate;
mod graph;
mod layers;
mod memory;
mod normalizer;
mod params;
mod policy;
mod registry;
mod sac;
mod tensor;
mod train;

pub use actor::{
    gate_entropy, positional_encoding, squashed_log_prob, squashed_sample, ActorKind, ActorNet, ActorOutput, ActorShape,
    MlpActor, MoeActor, LOG_STD_MAX, LOG_STD_MIN,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{TrainerConfig, TrainerConfigError};
pub use critic::CriticPair;
pub use error::AgentError;
pub use evaluate::{eval_episode_seed, evaluate_policy, EpisodeRow, EvalReport};
pub use graph::{Graph, Var};
pub use layers::{LayerNorm, Linear, Mlp};
pub use memory::{ReplayMemory, Transition};
pub use normalizer::ObsNormalizer;
pub use params::{Adam, Bound, ParamId, ParamSet, ScalarAdam};
pub use policy::{actor_act, ActMode, LearnedPolicy, MrtPolicy, Policy, RandomPolicy};
pub use registry::{AgentRun, AgentStrategy, Registry, RunRequest};
pub use sac::{
    actor_loss_and_grads, critic_loss_and_grads, critic_targets, gaussian_noise, ActorLoss, Batch, LossReport, SacLearner,
};
pub use tensor::Matrix;
pub use train::{metrics_csv, train, LossRecord, MetricsRow, TrainOutcome, EVAL_SEED_OFFSET, METRICS_HEADER};
