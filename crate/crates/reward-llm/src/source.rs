use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use isac_env::SystemConfig;
use isac_reward_dsl::{builtin_normalized_reward, parse, NormalizedRewardParams, ParseError, RewardExpr};
use thiserror::Error;

use crate::client::{request_reward, Clock, Endpoint, LlmError, LlmResponse, Transport};
use crate::knowledge::KnowledgeStore;
use crate::prompt::{build_prompt, PromptBundle};

/// Where a run's reward comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewardMode {
    Llm,
    Fallback,
    File(PathBuf),
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(RewardMode::Llm),
            "fallback" => Ok(RewardMode::Fallback),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(RewardMode::File(PathBuf::from(path))),
                _ => Err(format!("unknown reward mode `{s}` (expected llm, fallback or file:PATH)")),
            },
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardMode::Llm => f.write_str("llm"),
            RewardMode::Fallback => f.write_str("fallback"),
            RewardMode::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Error)]
pub enum RewardSourceError {
    #[error("reading reward file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("reward file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("LLM mode is disabled by --offline")]
    Offline,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("LLM reply has no usable reward expression: {reason}")]
    Extraction {
        reason: String,
        /// The reply, kept so the caller can persist it.
        response: Box<LlmResponse>,
    },
}

/// Inputs shared by every reward mode.
pub struct RewardContext<'a> {
    pub normalized: NormalizedRewardParams,
    pub objective: &'a str,
    pub store: &'a KnowledgeStore,
    pub top_k: usize,
    pub endpoint: &'a Endpoint,
    pub transport: &'a dyn Transport,
    pub clock: &'a dyn Clock,
    pub offline: bool,
}

/// The chosen reward and everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct RewardProvenance {
    pub mode: RewardMode,
    pub expr: RewardExpr,
    pub canonical: String,
    /// Bytes of the reward file, in file mode.
    pub file_text: Option<String>,
    /// Prompt and reply, in LLM mode.
    pub prompt: Option<PromptBundle>,
    pub response: Option<LlmResponse>,
}

/// Resolves the reward for a run. Only LLM mode touches the transport.
pub fn obtain_reward(
    config: &SystemConfig,
    mode: &RewardMode,
    ctx: &RewardContext<'_>,
) -> Result<RewardProvenance, RewardSourceError> {
    let provenance = |expr: RewardExpr| RewardProvenance {
        mode: mode.clone(),
        canonical: expr.to_canonical(),
        expr,
        file_text: None,
        prompt: None,
        response: None,
    };
    match mode {
        RewardMode::Fallback => Ok(provenance(builtin_normalized_reward(&ctx.normalized))),
        RewardMode::File(path) => {
            let shown = path.display().to_string();
            let text = fs::read_to_string(path)
                .map_err(|source| RewardSourceError::Io { path: shown.clone(), source })?;
            let expr = parse(text.trim()).map_err(|source| RewardSourceError::Parse { path: shown, source })?;
            Ok(RewardProvenance { file_text: Some(text), ..provenance(expr) })
        }
        RewardMode::Llm => {
            if ctx.offline {
                return Err(RewardSourceError::Offline);
            }
            let bundle = build_prompt(config, ctx.objective, ctx.store, ctx.top_k);
            let response = request_reward(&bundle, ctx.endpoint, ctx.transport, ctx.clock)?;
            match response.expr.clone() {
                Some(expr) => Ok(RewardProvenance {
                    prompt: Some(bundle),
                    response: Some(response),
                    ..provenance(expr)
                }),
                None => Err(RewardSourceError::Extraction {
                    reason: response.extraction_error.clone().unwrap_or_default(),
                    response: Box::new(response),
                }),
            }
        }
    }
}
