//! Experiment orchestration for the ISAC beamforming agents.
//!
//! [`spec`] reads TOML experiment specs, [`run`] trains and evaluates one
//! agent over a transmit-power sweep and several seeds, [`report`] turns
//! run records into comparison curves, [`reward`] resolves and audits the
//! reward function and [`selftest`] runs the oracle checks. The
//! `isac-lab` binary exposes all of them as subcommands.

pub mod record;
pub mod report;
pub mod reward;
pub mod run;
pub mod selftest;
pub mod spec;

use std::path::Path;

use isac_reward_llm::RewardSourceError;
use thiserror::Error;

pub use record::{CellRow, CellStatus, RecordEnvironment, RunRecord, RUN_RECORD_FILE, RUN_RECORD_FORMAT};
pub use report::{build_report, crb_improvement_pct, rate_improvement_pct, write_report, SweepReport};
pub use reward::{resolve_reward, reward_audit, transport_for, AuditReport, ResolvedReward};
pub use run::{run_experiment, RunContext, FINAL_EVAL_SEED_OFFSET};
pub use selftest::{run_selftest, SelftestOptions, SelftestReport};
pub use spec::{load_spec, parse_spec, ExperimentSpec, LlmFailurePolicy, Overrides, SpecError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    RewardSource(RewardSourceError),
    #[error("reward: {0}")]
    Reward(String),
    #[error("run record: {0}")]
    Record(String),
    #[error("report: {0}")]
    Report(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
