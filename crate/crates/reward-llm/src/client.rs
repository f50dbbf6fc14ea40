//! Chat-completion client.
//!
//! Request body (`POST {url}`):
//! ```json
//! {"model": "...", "temperature": 0.0,
//!  "messages": [{"role": "system", "content": "..."}, {"role": "user", "content": "..."}]}
//! ```
//! Response body: `{"id": "...", "model": "...", "choices": [{"message":
//! {"role": "assistant", "content": "..."}, "finish_reason": "stop"}]}`.
//! Only `choices[0].message.content` is required.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use isac_reward_dsl::RewardExpr;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::extract_expression;
use crate::prompt::PromptBundle;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_API_KEY_ENV: &str = "ISAC_LLM_API_KEY";

/// Where and how to reach the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoint {
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token; empty disables auth.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for Endpoint {
    fn default() -> Self {
        Endpoint {
            url: "http://127.0.0.1:8080/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl Endpoint {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ChatResponse {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
    #[serde(default)]
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("network access is disabled")]
    Forbidden,
}

/// One blocking HTTP POST. Implementations must give up after `timeout`.
pub trait Transport: Send + Sync {
    fn post(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpReply, TransportError>;
}

/// Monotonic time source, replaceable in tests.
pub trait Clock: Send + Sync {
    fn elapsed(&self) -> Duration;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

/// Real HTTP transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpReply, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&request.url);
        for (k, v) in &request.headers {
            req = req.header(k, v);
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connection(other.to_string()),
        };
        let response = req.send(request.body.as_str()).map_err(map_err)?;
        let status = response.status().as_u16();
        let body = response.into_body().read_to_string().map_err(map_err)?;
        Ok(HttpReply { status, body })
    }
}

/// Refuses every request; used when the run is offline.
#[derive(Debug, Default)]
pub struct OfflineTransport {
    attempts: AtomicUsize,
}

impl OfflineTransport {
    /// Requests that were attempted (and refused).
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for OfflineTransport {
    fn post(&self, _request: &HttpRequest, _timeout: Duration) -> Result<HttpReply, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Forbidden)
    }
}

/// Serves one recorded HTTP reply to every request; used to replay
/// transcripts without a live endpoint.
#[derive(Debug)]
pub struct ReplayTransport {
    reply: HttpReply,
    attempts: AtomicUsize,
}

impl ReplayTransport {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        ReplayTransport { reply: HttpReply { status, body: body.into() }, attempts: AtomicUsize::new(0) }
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for ReplayTransport {
    fn post(&self, _request: &HttpRequest, _timeout: Duration) -> Result<HttpReply, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Ok(self.reply.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("LLM request timed out after {0:?}")]
    Timeout(Duration),
    #[error("LLM transport failed after {attempts} attempt(s): {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: TransportError,
    },
    #[error("LLM authentication failed: {0}")]
    Auth(String),
    #[error("LLM endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("LLM response is not a chat completion: {0}")]
    Protocol(String),
}

/// Everything the model returned, kept verbatim for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    /// Assistant message content.
    pub raw_text: String,
    /// Full HTTP response body.
    pub raw_body: String,
    pub extracted_source: Option<String>,
    pub expr: Option<RewardExpr>,
    pub extraction_error: Option<String>,
    pub provider_meta: BTreeMap<String, String>,
}

pub fn chat_request(bundle: &PromptBundle, endpoint: &Endpoint) -> ChatRequest {
    ChatRequest {
        model: endpoint.model.clone(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: "You are an expert in wireless communication, radar sensing and reinforcement learning reward design.".into(),
            },
            ChatMessage { role: "user".into(), content: bundle.full_prompt.clone() },
        ],
        temperature: 0.0,
    }
}

/// Sends the prompt once (retrying transport failures at most
/// `endpoint.max_retries` times within the overall timeout) and extracts a
/// reward expression from the reply. A reply without a usable expression
/// is returned with `expr = None` and the reason in `extraction_error`.
pub fn request_reward(
    bundle: &PromptBundle,
    endpoint: &Endpoint,
    transport: &dyn Transport,
    clock: &dyn Clock,
) -> Result<LlmResponse, LlmError> {
    let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
    if !endpoint.api_key_env.is_empty() {
        let token = std::env::var(&endpoint.api_key_env)
            .map_err(|_| LlmError::Auth(format!("environment variable {} is not set", endpoint.api_key_env)))?;
        headers.push(("Authorization".to_string(), format!("Bearer {token}")));
    }
    let body = serde_json::to_string(&chat_request(bundle, endpoint)).expect("request serializes");
    let request = HttpRequest { url: endpoint.url.clone(), headers, body };

    let budget = endpoint.timeout();
    let start = clock.elapsed();
    let mut attempts = 0;
    let reply = loop {
        let spent = clock.elapsed().saturating_sub(start);
        if spent >= budget {
            return Err(LlmError::Timeout(budget));
        }
        attempts += 1;
        match transport.post(&request, budget - spent) {
            Ok(reply) => break reply,
            Err(TransportError::Timeout) if clock.elapsed().saturating_sub(start) >= budget => {
                return Err(LlmError::Timeout(budget));
            }
            Err(TransportError::Forbidden) => {
                return Err(LlmError::Transport { attempts, source: TransportError::Forbidden });
            }
            Err(e) if attempts > endpoint.max_retries => {
                return Err(match e {
                    TransportError::Timeout => LlmError::Timeout(budget),
                    source => LlmError::Transport { attempts, source },
                });
            }
            Err(_) => continue,
        }
    };

    match reply.status {
        200..=299 => {}
        401 | 403 => return Err(LlmError::Auth(format!("HTTP {}: {}", reply.status, reply.body))),
        status => return Err(LlmError::Http { status, body: reply.body }),
    }
    let parsed: ChatResponse =
        serde_json::from_str(&reply.body).map_err(|e| LlmError::Protocol(e.to_string()))?;
    let choice = parsed
        .choices
        .first()
        .ok_or_else(|| LlmError::Protocol("response has no choices".to_string()))?;
    let raw_text = choice.message.content.clone();

    let mut provider_meta = BTreeMap::new();
    provider_meta.insert("endpoint".to_string(), endpoint.url.clone());
    provider_meta.insert("attempts".to_string(), attempts.to_string());
    provider_meta.insert("model".to_string(), parsed.model.clone().unwrap_or_else(|| endpoint.model.clone()));
    if let Some(id) = &parsed.id {
        provider_meta.insert("response_id".to_string(), id.clone());
    }
    if let Some(reason) = &choice.finish_reason {
        provider_meta.insert("finish_reason".to_string(), reason.clone());
    }

    let (extracted_source, expr, extraction_error) = match extract_expression(&raw_text) {
        Ok(found) => (Some(found.source), Some(found.expr), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(LlmResponse { raw_text, raw_body: reply.body, extracted_source, expr, extraction_error, provider_meta })
}
