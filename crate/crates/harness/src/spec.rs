//! Experiment specification files.
//!
//! A spec is TOML with five sections. Only `[experiment]` is required;
//! every key has a default and unknown keys are rejected with their full
//! path (for example `trainer.lr_actr`).
//!
//! ```toml
//! [experiment]
//! agent_kind = "agentic"        # agentic | mlp_sac | random | mrt
//! reward_mode = "fallback"      # llm | fallback | file:PATH
//! sweep_dbm = [10, 15, 20, 25, 30]
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "runs"
//! eval_episodes = 20            # final evaluation episodes per cell
//! label = "agentic"             # method name in reports (optional)
//!
//! [system]                      # isac_env::SystemConfig keys
//! [trainer]                     # isac_agent::TrainerConfig keys, except `seed`
//!
//! [reward]
//! objective = "..."             # optional, replaces the default objective
//! top_k = 4                     # retrieved snippets in the prompt
//! knowledge_dir = "notes"       # optional, replaces the built-in corpus
//! on_llm_failure = "abort"      # abort | fallback
//! [reward.normalized]           # constants of the built-in normalized reward
//! rate_ref = 10.0
//!
//! [llm]                         # chat-completion endpoint
//! url = "http://127.0.0.1:8080/v1/chat/completions"
//! model = "gpt-4o"
//! api_key_env = "ISAC_LLM_API_KEY"
//! timeout_secs = 60
//! max_retries = 2
//! replay = "reply.json"         # optional recorded response body served instead
//! ```
//!
//! Relative paths (`output_dir`, `file:` rewards, `knowledge_dir`,
//! `replay`) are resolved against the directory holding the spec.

use std::fs;
use std::path::{Path, PathBuf};

use isac_agent::{Registry, TrainerConfig};
use isac_env::SystemConfig;
use isac_reward_dsl::NormalizedRewardParams;
use isac_reward_llm::{Endpoint, RewardMode, DEFAULT_OBJECTIVE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("reading spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("spec {file}: {key}: {message}")]
    Invalid { file: String, key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    experiment: ExperimentSection,
    #[serde(default)]
    system: SystemConfig,
    #[serde(default)]
    trainer: TrainerConfig,
    #[serde(default)]
    reward: RewardSection,
    #[serde(default)]
    llm: LlmSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    #[serde(default = "default_agent_kind")]
    agent_kind: String,
    #[serde(default = "default_reward_mode")]
    reward_mode: String,
    #[serde(default = "default_sweep")]
    sweep_dbm: Vec<f64>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default = "default_eval_episodes")]
    eval_episodes: usize,
    #[serde(default)]
    label: Option<String>,
}

fn default_agent_kind() -> String {
    "agentic".to_string()
}

fn default_reward_mode() -> String {
    "fallback".to_string()
}

fn default_sweep() -> Vec<f64> {
    vec![10.0, 15.0, 20.0, 25.0, 30.0]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_eval_episodes() -> usize {
    20
}

/// What to do when LLM mode cannot produce a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmFailurePolicy {
    #[default]
    Abort,
    /// Continue with the built-in normalized reward; the record notes why.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub objective: Option<String>,
    pub top_k: usize,
    pub knowledge_dir: Option<PathBuf>,
    pub on_llm_failure: LlmFailurePolicy,
    pub normalized: NormalizedRewardParams,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            objective: None,
            top_k: 4,
            knowledge_dir: None,
            on_llm_failure: LlmFailurePolicy::Abort,
            normalized: NormalizedRewardParams::default(),
        }
    }
}

impl RewardSection {
    pub fn objective(&self) -> &str {
        self.objective.as_deref().unwrap_or(DEFAULT_OBJECTIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub replay: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        let e = Endpoint::default();
        LlmSection {
            url: e.url,
            model: e.model,
            api_key_env: e.api_key_env,
            timeout_secs: e.timeout_secs,
            max_retries: e.max_retries,
            replay: None,
        }
    }
}

impl LlmSection {
    /// A replayed reply needs no credentials, so `api_key_env` is dropped
    /// when `replay` is set.
    pub fn endpoint(&self) -> Endpoint {
        Endpoint {
            url: self.url.clone(),
            model: self.model.clone(),
            api_key_env: if self.replay.is_some() { String::new() } else { self.api_key_env.clone() },
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
        }
    }
}

/// Command-line adjustments applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Replaces `experiment.output_dir`.
    pub out: Option<PathBuf>,
    /// Replaces `experiment.seeds` with this single seed.
    pub seed: Option<u64>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub agent_kind: String,
    pub reward_mode: RewardMode,
    pub sweep_dbm: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    pub label: String,
    pub system: SystemConfig,
    pub trainer: TrainerConfig,
    pub reward: RewardSection,
    pub llm: LlmSection,
    /// Hex SHA-256 of the spec bytes followed by any seed override.
    pub spec_hash: String,
    /// The spec file, verbatim.
    pub source_text: String,
}

impl ExperimentSpec {
    /// Artifact directory of this spec: `output_dir/<first 16 hex digits of the hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.spec_hash[..16])
    }

    /// `system` with the transmit power of one sweep point.
    pub fn system_at(&self, p_max_dbm: f64) -> SystemConfig {
        SystemConfig { p_max_dbm, ..self.system.clone() }
    }
}

/// SHA-256 over the spec bytes; a seed override is appended as a comment
/// line so overridden runs get their own directory.
pub fn spec_hash(bytes: &[u8], overrides: &Overrides) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    if let Some(seed) = overrides.seed {
        h.update(format!("\n# --seed-override {seed}\n").as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn load_spec(path: &Path, overrides: &Overrides, registry: &Registry) -> Result<ExperimentSpec, SpecError> {
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| SpecError::Io { path: shown.clone(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_spec(&bytes, &base, overrides, registry).map_err(|(key, message)| SpecError::Invalid { file: shown, key, message })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

type Invalid = (String, String);

fn invalid(key: &str, message: impl Into<String>) -> Invalid {
    (key.to_string(), message.into())
}

/// Parses and validates spec bytes; relative paths resolve against `base`.
pub fn parse_spec(bytes: &[u8], base: &Path, overrides: &Overrides, registry: &Registry) -> Result<ExperimentSpec, (String, String)> {
    let text = std::str::from_utf8(bytes).map_err(|e| invalid("(file)", format!("not UTF-8: {e}")))?;
    let de = toml::Deserializer::parse(text).map_err(|e| invalid("(syntax)", e.to_string().trim_end()))?;
    let file: SpecFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut key = e.path().to_string();
        let message = e.inner().message().to_string();
        if let Some(name) = message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
            if key == "." {
                key = name.to_string();
            } else if key.rsplit('.').next() != Some(name) {
                key = format!("{key}.{name}");
            }
        }
        (key, message)
    })?;

    let ex = file.experiment;
    if registry.get(&ex.agent_kind).is_err() {
        return Err(invalid("experiment.agent_kind", format!("unknown agent `{}` (known: {})", ex.agent_kind, registry.names().join(", "))));
    }
    let reward_mode = match ex.reward_mode.parse::<RewardMode>().map_err(|m| invalid("experiment.reward_mode", m))? {
        RewardMode::File(p) => RewardMode::File(resolve(base, &p)),
        other => other,
    };
    if ex.sweep_dbm.is_empty() {
        return Err(invalid("experiment.sweep_dbm", "must list at least one power"));
    }
    if let Some(v) = ex.sweep_dbm.iter().find(|v| !v.is_finite()) {
        return Err(invalid("experiment.sweep_dbm", format!("{v} is not finite")));
    }
    if ex.sweep_dbm.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("experiment.sweep_dbm", "values must be strictly increasing"));
    }
    let seeds = match overrides.seed {
        Some(s) => vec![s],
        None => ex.seeds,
    };
    if seeds.is_empty() {
        return Err(invalid("experiment.seeds", "must list at least one seed"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("experiment.seeds", "seeds must be distinct"));
    }
    if ex.eval_episodes == 0 {
        return Err(invalid("experiment.eval_episodes", "must be at least 1"));
    }
    let label = ex.label.unwrap_or_else(|| default_label(&ex.agent_kind, &reward_mode));
    if label.is_empty() || label.contains(['\n', '\r']) {
        return Err(invalid("experiment.label", "must be a non-empty single line"));
    }

    file.system.validate().map_err(|e| match e {
        isac_env::ConfigError::Invalid { key, message } => invalid(&format!("system.{key}"), message),
        other => invalid("system", other.to_string()),
    })?;
    for p in &ex.sweep_dbm {
        SystemConfig { p_max_dbm: *p, ..file.system.clone() }
            .validate()
            .map_err(|e| invalid("experiment.sweep_dbm", e.to_string()))?;
    }
    if file.trainer.seed != TrainerConfig::default().seed {
        return Err(invalid("trainer.seed", "seeds come from experiment.seeds"));
    }
    file.trainer.validate().map_err(|e| invalid(&format!("trainer.{}", e.key), e.message))?;

    let n = &file.reward.normalized;
    for (key, v, positive) in [
        ("rate_ref", n.rate_ref, true),
        ("c_ref", n.c_ref, false),
        ("c_scale", n.c_scale, true),
        ("beta", n.beta, false),
        ("gamma", n.gamma, false),
    ] {
        if !v.is_finite() || (positive && v <= 0.0) {
            let need = if positive { "a positive finite number" } else { "finite" };
            return Err(invalid(&format!("reward.normalized.{key}"), format!("must be {need}, got {v}")));
        }
    }
    if !(file.llm.timeout_secs.is_finite() && file.llm.timeout_secs > 0.0) {
        return Err(invalid("llm.timeout_secs", "must be positive"));
    }

    let mut reward = file.reward;
    reward.knowledge_dir = reward.knowledge_dir.map(|p| resolve(base, &p));
    let mut llm = file.llm;
    llm.replay = llm.replay.map(|p| resolve(base, &p));

    Ok(ExperimentSpec {
        agent_kind: ex.agent_kind,
        reward_mode,
        sweep_dbm: ex.sweep_dbm,
        seeds,
        output_dir: overrides.out.clone().unwrap_or_else(|| resolve(base, &ex.output_dir)),
        eval_episodes: ex.eval_episodes,
        label,
        system: file.system,
        trainer: file.trainer,
        reward,
        llm,
        spec_hash: spec_hash(bytes, overrides),
        source_text: text.to_string(),
    })
}

/// `agent_kind/reward`, with the reward file's stem for file mode.
fn default_label(kind: &str, mode: &RewardMode) -> String {
    let reward = match mode {
        RewardMode::File(p) => p.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned()),
        other => other.to_string(),
    };
    format!("{kind}/{reward}")
}
