//! LLM-assisted reward design.
//!
//! [`build_prompt`] renders the system model, the optimization objective,
//! the reward-language reference and BM25-retrieved notes from a local
//! [`KnowledgeStore`]; [`request_reward`] sends it to a chat-completion
//! endpoint and [`extract_expression`] recovers a validated reward
//! expression from the reply. [`obtain_reward`] picks between that
//! pipeline, the built-in normalized reward and a reward file.

mod client;
mod extract;
mod knowledge;
mod prompt;
mod source;

pub use client::{
    chat_request, request_reward, ChatChoice, ChatMessage, ChatRequest, ChatResponse, Clock, Endpoint,
    HttpReply, HttpRequest, HttpTransport, LlmError, LlmResponse, OfflineTransport, ReplayTransport, SystemClock, Transport,
    TransportError, DEFAULT_API_KEY_ENV, DEFAULT_MAX_RETRIES, DEFAULT_TIMEOUT,
};
pub use extract::{extract_expression, ExtractError, Extracted};
pub use knowledge::{index_store, tokenize, Document, KnowledgeStore, Snippet, StoreError, BM25_B, BM25_K1};
pub use prompt::{build_prompt, dsl_reference, system_description, PromptBundle, DEFAULT_OBJECTIVE};
pub use source::{obtain_reward, RewardContext, RewardMode, RewardProvenance, RewardSourceError};
