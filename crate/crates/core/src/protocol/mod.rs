//! The token-level inference protocol spoken between the orchestrator and
//! any model backend.
//!
//! [`Backend`] is the in-process view of the protocol. It is implemented by
//! [`MockBackend`] (deterministic, hash-derived logits), and by
//! [`HttpBackend`], which speaks JSON over HTTP/1.1 to a `/v1` server such
//! as the one started by [`serve`].

mod client;
pub mod fnv;
mod mock;
mod server;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::HttpBackend;
pub use mock::{fixture_clauses, MockBackend, MockConfig, MOCK_MODELS};
pub use server::{router, serve, MockServerHandle, ServerHandle};

pub type TokenId = u32;

/// A token sequence tagged with the model whose vocabulary it uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub model_id: String,
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Causal,
    Seq2seq,
    Extractive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCapability {
    pub model_id: String,
    pub vocab_size: u32,
    pub kind: ModelKind,
    pub max_context: usize,
    /// Token that terminates a hypothesis, if the model has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos_token_id: Option<TokenId>,
}

/// Commonsense relation kinds the pipeline keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "xIntent")]
    XIntent,
    #[serde(rename = "xNeed")]
    XNeed,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::XIntent, Relation::XNeed];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::XIntent => "xIntent",
            Relation::XNeed => "xNeed",
        }
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Relation {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xIntent" => Ok(Relation::XIntent),
            "xNeed" => Ok(Relation::XNeed),
            other => Err(BackendError::bad_request(format!(
                "unsupported relation {other:?}"
            ))),
        }
    }
}

/// Next-token logits, possibly truncated to a subset of the vocabulary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogitMap {
    pub entries: BTreeMap<TokenId, f64>,
    /// Whether every vocabulary id is present.
    pub complete: bool,
}

impl LogitMap {
    pub fn get(&self, id: TokenId) -> Option<f64> {
        self.entries.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Log-softmax over the entries that are present and not `-inf`.
    pub fn log_softmax(&self) -> Vec<(TokenId, f64)> {
        log_softmax(self.entries.iter().map(|(&t, &l)| (t, l)))
    }
}

pub(crate) fn log_softmax(entries: impl Iterator<Item = (TokenId, f64)>) -> Vec<(TokenId, f64)> {
    let live: Vec<(TokenId, f64)> = entries.filter(|(_, l)| *l > f64::NEG_INFINITY).collect();
    let Some(max) = live.iter().map(|(_, l)| *l).reduce(f64::max) else {
        return Vec::new();
    };
    let sum: f64 = live.iter().map(|(_, l)| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    live.into_iter().map(|(t, l)| (t, l - log_z)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRequest {
    pub model: String,
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_tokens: Option<Vec<TokenId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_tokens: Option<Vec<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsResponse {
    pub entries: Vec<(TokenId, f64)>,
    pub complete: bool,
}

impl From<LogitMap> for LogitsResponse {
    fn from(m: LogitMap) -> Self {
        Self {
            entries: m.entries.into_iter().collect(),
            complete: m.complete,
        }
    }
}

impl From<LogitsResponse> for LogitMap {
    fn from(r: LogitsResponse) -> Self {
        Self {
            entries: r.entries.into_iter().collect(),
            complete: r.complete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model: String,
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_tokens: Option<Vec<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub model: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetokenizeRequest {
    pub model: String,
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetokenizeResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRequest {
    pub model: String,
    pub text: String,
    /// Relation names as strings so unknown ones reach the backend and are
    /// rejected there with a protocol error.
    pub relations: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseWire {
    pub relation: Relation,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub clauses: Vec<ClauseWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub model: String,
    pub context: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAnswer {
    pub answer: String,
    /// Byte offsets into the context.
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

impl SpanAnswer {
    pub fn empty() -> Self {
        Self {
            answer: String::new(),
            start: 0,
            end: 0,
            confidence: 0.0,
        }
    }
}

/// Error body returned by the server for any failed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// The backend understood the request and refused it.
    #[error("protocol error (status {status}): {message}")]
    Protocol { status: u16, message: String },
    /// The request never got a well-formed answer.
    #[error("transport error: {0}")]
    Transport(String),
}

impl BackendError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        BackendError::Protocol {
            status: 400,
            message: message.into(),
        }
    }

    pub fn unknown_model(model: &str) -> Self {
        BackendError::Protocol {
            status: 404,
            message: format!("unknown model {model:?}"),
        }
    }

    pub fn is_protocol(&self) -> bool {
        matches!(self, BackendError::Protocol { .. })
    }
}

/// Any inference backend reachable through the protocol.
///
/// Implementations must be safe to call from several threads at once.
pub trait Backend: Send + Sync {
    fn models(&self) -> Result<Vec<ModelCapability>, BackendError>;

    fn next_logits(&self, req: &LogitsRequest) -> Result<LogitMap, BackendError>;

    /// Per-token conditional log-probabilities: `len - 1` values for causal
    /// models, `len` for seq2seq.
    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>, BackendError>;

    fn tokenize(&self, model: &str, text: &str) -> Result<Vec<TokenId>, BackendError>;

    fn detokenize(&self, model: &str, tokens: &[TokenId]) -> Result<String, BackendError>;

    fn infer_clauses(&self, req: &InferRequest) -> Result<Vec<ClauseWire>, BackendError>;

    fn extract_span(&self, req: &ExtractRequest) -> Result<SpanAnswer, BackendError>;

    fn capability(&self, model: &str) -> Result<ModelCapability, BackendError> {
        self.models()?
            .into_iter()
            .find(|m| m.model_id == model)
            .ok_or_else(|| BackendError::unknown_model(model))
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn models(&self) -> Result<Vec<ModelCapability>, BackendError> {
        (**self).models()
    }
    fn next_logits(&self, req: &LogitsRequest) -> Result<LogitMap, BackendError> {
        (**self).next_logits(req)
    }
    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
        (**self).score(req)
    }
    fn tokenize(&self, model: &str, text: &str) -> Result<Vec<TokenId>, BackendError> {
        (**self).tokenize(model, text)
    }
    fn detokenize(&self, model: &str, tokens: &[TokenId]) -> Result<String, BackendError> {
        (**self).detokenize(model, tokens)
    }
    fn infer_clauses(&self, req: &InferRequest) -> Result<Vec<ClauseWire>, BackendError> {
        (**self).infer_clauses(req)
    }
    fn extract_span(&self, req: &ExtractRequest) -> Result<SpanAnswer, BackendError> {
        (**self).extract_span(req)
    }
    fn capability(&self, model: &str) -> Result<ModelCapability, BackendError> {
        (**self).capability(model)
    }
}
