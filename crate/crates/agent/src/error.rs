use isac_env::EnvError;
use thiserror::Error;

use crate::config::TrainerConfigError;
use crate::sac::LossReport;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] TrainerConfigError),
    #[error("observation has {got} features, expected {expected}")]
    ObservationShape { expected: usize, got: usize },
    #[error("non-finite loss at update {update}: {report:?}")]
    NonFiniteLoss { update: u64, report: LossReport },
    #[error("unknown agent kind `{0}`")]
    UnknownKind(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
