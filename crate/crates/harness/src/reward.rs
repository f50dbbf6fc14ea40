//! Reward resolution for a run and the provenance audit.

use std::fmt::{self, Write as _};
use std::fs;

use isac_agent::{ActMode, MrtPolicy, Policy};
use isac_env::IsacEnv;
use isac_reward_dsl::{builtin_normalized_reward, evaluate, parse, RewardExpr};
use isac_reward_llm::{
    obtain_reward, Clock, HttpTransport, KnowledgeStore, LlmResponse, OfflineTransport, PromptBundle, ReplayTransport,
    RewardContext, RewardMode, RewardProvenance, RewardSourceError, Transport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::spec::{ExperimentSpec, LlmFailurePolicy};
use crate::HarnessError;

/// The reward a run uses, how it was obtained, and anything the model
/// said along the way.
#[derive(Debug, Clone)]
pub struct ResolvedReward {
    pub mode: RewardMode,
    pub expr: RewardExpr,
    pub canonical: String,
    pub file_text: Option<String>,
    pub prompt: Option<PromptBundle>,
    /// Reply of the model, including one that yielded no expression.
    pub response: Option<LlmResponse>,
    /// Set when LLM mode failed and the normalized reward was used instead.
    pub fallback_notice: Option<String>,
}

impl ResolvedReward {
    fn from_provenance(p: RewardProvenance) -> Self {
        ResolvedReward {
            mode: p.mode,
            expr: p.expr,
            canonical: p.canonical,
            file_text: p.file_text,
            prompt: p.prompt,
            response: p.response,
            fallback_notice: None,
        }
    }
}

/// Transport for a spec: the recorded reply when `llm.replay` is set, a
/// refusing double when offline, real HTTP otherwise.
pub fn transport_for(spec: &ExperimentSpec, offline: bool) -> Result<Box<dyn Transport>, HarnessError> {
    Ok(match &spec.llm.replay {
        Some(path) => {
            let body = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            Box::new(ReplayTransport::new(200, body))
        }
        None if offline => Box::new(OfflineTransport::default()),
        None => Box::new(HttpTransport),
    })
}

/// Resolves the spec's reward. A replayed reply is local, so `offline`
/// only blocks LLM mode when no replay file is configured.
pub fn resolve_reward(
    spec: &ExperimentSpec,
    transport: &dyn Transport,
    clock: &dyn Clock,
    offline: bool,
) -> Result<ResolvedReward, HarnessError> {
    let store = match &spec.reward.knowledge_dir {
        Some(dir) => KnowledgeStore::load_dir(dir).map_err(|e| HarnessError::Reward(e.to_string()))?,
        None => KnowledgeStore::builtin(),
    };
    let endpoint = spec.llm.endpoint();
    let ctx = RewardContext {
        normalized: spec.reward.normalized,
        objective: spec.reward.objective(),
        store: &store,
        top_k: spec.reward.top_k,
        endpoint: &endpoint,
        transport,
        clock,
        offline: offline && spec.llm.replay.is_none(),
    };
    match obtain_reward(&spec.system, &spec.reward_mode, &ctx) {
        Ok(p) => Ok(ResolvedReward::from_provenance(p)),
        Err(e) if spec.reward_mode == RewardMode::Llm && spec.reward.on_llm_failure == LlmFailurePolicy::Fallback => {
            let notice = format!("LLM reward unavailable ({e}); using the built-in normalized reward");
            log::warn!("{notice}");
            let expr = builtin_normalized_reward(&spec.reward.normalized);
            let response = match e {
                RewardSourceError::Extraction { response, .. } => Some(*response),
                _ => None,
            };
            Ok(ResolvedReward {
                mode: RewardMode::Llm,
                canonical: expr.to_canonical(),
                expr,
                file_text: None,
                prompt: None,
                response,
                fallback_notice: Some(notice),
            })
        }
        Err(e) => Err(HarnessError::RewardSource(e)),
    }
}

/// Everything needed to re-create a run's reward.
#[derive(Debug, Clone)]
pub struct AuditReport {
    pub reward: ResolvedReward,
    /// Canonical text parses back to the same expression.
    pub round_trip: bool,
    /// Reward of one MRT step on the spec's system at the first sweep power.
    pub probe_value: Result<f64, String>,
}

impl AuditReport {
    pub fn valid(&self) -> bool {
        self.round_trip && self.probe_value.is_ok()
    }
}

pub fn reward_audit(
    spec: &ExperimentSpec,
    transport: &dyn Transport,
    clock: &dyn Clock,
    offline: bool,
) -> Result<AuditReport, HarnessError> {
    let reward = resolve_reward(spec, transport, clock, offline)?;
    let round_trip = parse(&reward.canonical).is_ok_and(|e| e == reward.expr);
    let probe_value = probe(spec, &reward.expr);
    Ok(AuditReport { reward, round_trip, probe_value })
}

fn probe(spec: &ExperimentSpec, expr: &RewardExpr) -> Result<f64, String> {
    let system = spec.system_at(spec.sweep_dbm[0]);
    let mut env = IsacEnv::new(system.clone()).map_err(|e| e.to_string())?;
    let obs = env.reset(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let raw = MrtPolicy::new(&system).act(&obs, ActMode::Deterministic, &mut rng).map_err(|e| e.to_string())?;
    let out = env.step(&raw, expr).map_err(|e| e.to_string())?;
    evaluate(expr, &out.info).map_err(|e| e.to_string())
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.reward;
        let mut s = String::new();
        let _ = writeln!(s, "reward mode: {}", r.mode);
        if let Some(notice) = &r.fallback_notice {
            let _ = writeln!(s, "fallback: {notice}");
        }
        match r.mode {
            RewardMode::Fallback => {
                let _ = writeln!(s, "fallback notice: built-in normalized reward, no model consulted");
            }
            RewardMode::File(ref path) => {
                let _ = writeln!(s, "\n== reward file {} ==", path.display());
                s.push_str(r.file_text.as_deref().unwrap_or(""));
                if !s.ends_with('\n') {
                    s.push('\n');
                }
            }
            RewardMode::Llm => {}
        }
        if let Some(p) = &r.prompt {
            let _ = writeln!(s, "\n== retrieved snippets ==");
            for (i, snip) in p.retrieved_snippets.iter().enumerate() {
                let _ = writeln!(s, "[{}] {} score {:.6}", i + 1, snip.doc_id, snip.score);
            }
            let _ = writeln!(s, "\n== prompt ==\n{}", p.full_prompt);
        }
        if let Some(resp) = &r.response {
            let _ = writeln!(s, "== transcript ==");
            for (k, v) in &resp.provider_meta {
                let _ = writeln!(s, "{k}: {v}");
            }
            let _ = writeln!(s, "--- assistant ---\n{}\n--- end ---", resp.raw_text);
            if let Some(e) = &resp.extraction_error {
                let _ = writeln!(s, "extraction error: {e}");
            }
        }
        let _ = writeln!(s, "\ncanonical reward: {}", r.canonical);
        let features: Vec<_> = r.expr.features().iter().map(|f| f.name()).collect();
        let _ = writeln!(s, "features: {}", features.join(", "));
        let _ = writeln!(s, "canonical round-trip: {}", if self.round_trip { "ok" } else { "FAILED" });
        match &self.probe_value {
            Ok(v) => {
                let _ = writeln!(s, "probe step reward: {v}");
            }
            Err(e) => {
                let _ = writeln!(s, "probe step reward: FAILED ({e})");
            }
        }
        let _ = writeln!(s, "verdict: {}", if self.valid() { "valid" } else { "invalid" });
        f.write_str(&s)
    }
}
