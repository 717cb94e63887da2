//! `/v1` HTTP server over any [`Backend`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use super::{
    Backend, BackendError, DetokenizeRequest, DetokenizeResponse, ErrorBody, ExtractRequest,
    InferRequest, InferResponse, LogitsRequest, LogitsResponse, ScoreRequest, ScoreResponse,
    TokenizeRequest, TokenizeResponse,
};

type Shared = Arc<dyn Backend>;

struct ApiError(BackendError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self.0 {
            BackendError::Protocol { status, message } => (
                StatusCode::from_u16(status).unwrap_or(StatusCode::BAD_REQUEST),
                message,
            ),
            BackendError::Transport(message) => (StatusCode::BAD_GATEWAY, message),
        };
        (status, Json(ErrorBody { error: message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs a blocking backend call off the async workers.
async fn call<T, F>(backend: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&dyn Backend) -> Result<T, BackendError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(backend.as_ref()))
        .await
        .map_err(|e| ApiError(BackendError::Transport(format!("handler panicked: {e}"))))?
        .map(Json)
        .map_err(ApiError)
}

pub fn router(backend: Arc<dyn Backend>) -> Router {
    Router::new()
        .route("/v1/models", get(models))
        .route("/v1/logits", post(logits))
        .route("/v1/score", post(score))
        .route("/v1/tokenize", post(tokenize))
        .route("/v1/detokenize", post(detokenize))
        .route("/v1/infer", post(infer))
        .route("/v1/extract", post(extract))
        .with_state(backend)
}

async fn models(State(b): State<Shared>) -> ApiResult<Vec<super::ModelCapability>> {
    call(b, |b| b.models()).await
}

async fn logits(State(b): State<Shared>, Json(req): Json<LogitsRequest>) -> ApiResult<LogitsResponse> {
    call(b, move |b| b.next_logits(&req).map(Into::into)).await
}

async fn score(State(b): State<Shared>, Json(req): Json<ScoreRequest>) -> ApiResult<ScoreResponse> {
    call(b, move |b| b.score(&req).map(|logprobs| ScoreResponse { logprobs })).await
}

async fn tokenize(
    State(b): State<Shared>,
    Json(req): Json<TokenizeRequest>,
) -> ApiResult<TokenizeResponse> {
    call(b, move |b| {
        b.tokenize(&req.model, &req.text)
            .map(|tokens| TokenizeResponse { tokens })
    })
    .await
}

async fn detokenize(
    State(b): State<Shared>,
    Json(req): Json<DetokenizeRequest>,
) -> ApiResult<DetokenizeResponse> {
    call(b, move |b| {
        b.detokenize(&req.model, &req.tokens)
            .map(|text| DetokenizeResponse { text })
    })
    .await
}

async fn infer(State(b): State<Shared>, Json(req): Json<InferRequest>) -> ApiResult<InferResponse> {
    call(b, move |b| b.infer_clauses(&req).map(|clauses| InferResponse { clauses })).await
}

async fn extract(
    State(b): State<Shared>,
    Json(req): Json<ExtractRequest>,
) -> ApiResult<super::SpanAnswer> {
    call(b, move |b| b.extract_span(&req)).await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

pub type MockServerHandle = ServerHandle;

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops on its own.
    pub fn wait(mut self) -> std::io::Result<()> {
        self.shutdown.take();
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server panicked"))),
            None => Ok(()),
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `backend` until the
/// handle is dropped.
pub fn serve(backend: Arc<dyn Backend>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(backend);
    let thread = std::thread::Builder::new()
        .name(format!("retrogen-server-{addr}"))
        .spawn(move || {
            runtime.block_on(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        // A dropped sender means "run until the process exits".
                        if rx.await.is_err() {
                            std::future::pending::<()>().await;
                        }
                    })
                    .await
            })
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
