use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    Backend, BackendError, ClauseWire, DetokenizeRequest, DetokenizeResponse, ErrorBody,
    ExtractRequest, InferRequest, InferResponse, LogitMap, LogitsRequest, LogitsResponse,
    ModelCapability, ScoreRequest, ScoreResponse, SpanAnswer, TokenId, TokenizeRequest,
    TokenizeResponse,
};

/// Blocking JSON-over-HTTP client for a `/v1` backend.
///
/// The underlying connection pool is shared, so one client can serve many
/// threads at once. Do not call it from inside an async runtime.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    http: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(|e| BackendError::Transport(format!("POST {path}: {e}")))?;
        decode(path, resp)
    }

    fn get<Resp: DeserializeOwned>(&self, path: &str) -> Result<Resp, BackendError> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .map_err(|e| BackendError::Transport(format!("GET {path}: {e}")))?;
        decode(path, resp)
    }
}

fn decode<T: DeserializeOwned>(
    path: &str,
    resp: reqwest::blocking::Response,
) -> Result<T, BackendError> {
    let status = resp.status();
    let body = resp
        .bytes()
        .map_err(|e| BackendError::Transport(format!("{path}: reading body: {e}")))?;
    if !status.is_success() {
        let message = serde_json::from_slice::<ErrorBody>(&body)
            .map(|b| b.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
        return Err(BackendError::Protocol {
            status: status.as_u16(),
            message,
        });
    }
    serde_json::from_slice(&body)
        .map_err(|e| BackendError::Transport(format!("{path}: malformed response: {e}")))
}

impl Backend for HttpBackend {
    fn models(&self) -> Result<Vec<ModelCapability>, BackendError> {
        self.get("/v1/models")
    }

    fn next_logits(&self, req: &LogitsRequest) -> Result<LogitMap, BackendError> {
        let resp: LogitsResponse = self.post("/v1/logits", req)?;
        if let Some((id, l)) = resp.entries.iter().find(|(_, l)| !l.is_finite()) {
            return Err(BackendError::Transport(format!(
                "/v1/logits: non-finite logit {l} for id {id}"
            )));
        }
        Ok(resp.into())
    }

    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
        let resp: ScoreResponse = self.post("/v1/score", req)?;
        Ok(resp.logprobs)
    }

    fn tokenize(&self, model: &str, text: &str) -> Result<Vec<TokenId>, BackendError> {
        let resp: TokenizeResponse = self.post(
            "/v1/tokenize",
            &TokenizeRequest {
                model: model.to_string(),
                text: text.to_string(),
            },
        )?;
        Ok(resp.tokens)
    }

    fn detokenize(&self, model: &str, tokens: &[TokenId]) -> Result<String, BackendError> {
        let resp: DetokenizeResponse = self.post(
            "/v1/detokenize",
            &DetokenizeRequest {
                model: model.to_string(),
                tokens: tokens.to_vec(),
            },
        )?;
        Ok(resp.text)
    }

    fn infer_clauses(&self, req: &InferRequest) -> Result<Vec<ClauseWire>, BackendError> {
        let resp: InferResponse = self.post("/v1/infer", req)?;
        Ok(resp.clauses)
    }

    fn extract_span(&self, req: &ExtractRequest) -> Result<SpanAnswer, BackendError> {
        self.post("/v1/extract", req)
    }
}
