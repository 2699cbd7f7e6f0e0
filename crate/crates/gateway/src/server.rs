//! HTTP surface: routing, OpenAI-compatible proxying, metrics, reload.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ori_core::eval::UsageLedger;
use ori_core::registry::{dispatch_completion, CompletionBackend, CompletionRequest, DispatchError, GenerationParams, MockBackend, MultiBackend};
use ori_core::router::{route, RouterError};
use ori_core::{Embedder, Registry, RouterArtifact, RoutingDecision};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::backend::HttpBackend;
use crate::config::{EmbedderConfig, GatewayConfig};

pub const MODEL_HEADER: &str = "x-ori-model";
pub const CLUSTER_HEADER: &str = "x-ori-cluster";

/// Everything a request needs to route, swapped as one unit on reload.
pub struct Snapshot {
    pub artifact: RouterArtifact,
    pub registry: Registry,
    pub embedder: Arc<dyn Embedder>,
}

impl Snapshot {
    pub fn new(artifact: RouterArtifact, registry: Registry, embedder: Arc<dyn Embedder>) -> anyhow::Result<Self> {
        if embedder.fingerprint() != &artifact.fingerprint {
            anyhow::bail!(
                "artifact was trained with embedder {}, configured embedder is {}",
                artifact.fingerprint,
                embedder.fingerprint()
            );
        }
        Ok(Self { artifact, registry, embedder })
    }

    pub fn load(artifact: &Path, registry: &Path, embedder: &EmbedderConfig) -> anyhow::Result<Self> {
        let artifact = RouterArtifact::load(artifact).map_err(|e| anyhow::anyhow!("{}: {e}", artifact.display()))?;
        let registry = Registry::load(registry).map_err(|e| anyhow::anyhow!("{}: {e}", registry.display()))?;
        let embedder = embedder.build(Some(&artifact.fingerprint))?;
        if let Err(e) = artifact.check_registry(&registry) {
            tracing::warn!("artifact model map refers to models missing from the registry: {e}");
        }
        Self::new(artifact, registry, embedder)
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub backend_timeout: Duration,
    pub max_concurrent_backend_calls: usize,
    pub max_queued_requests: usize,
    pub metrics: bool,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { backend_timeout: Duration::from_secs(120), max_concurrent_backend_calls: 16, max_queued_requests: 256, metrics: true }
    }
}

/// Paths re-read by `POST /admin/reload`.
#[derive(Debug, Clone)]
pub struct ReloadSource {
    pub artifact: PathBuf,
    pub registry: PathBuf,
    pub embedder: EmbedderConfig,
}

#[derive(Default)]
struct Counters {
    route_requests: AtomicU64,
    chat_requests: AtomicU64,
    route_fallbacks: AtomicU64,
    chat_fallbacks: AtomicU64,
    rejected: AtomicU64,
    errors: Mutex<BTreeMap<&'static str, u64>>,
}

impl Counters {
    fn error(&self, kind: &'static str) {
        *self.errors.lock().unwrap_or_else(|e| e.into_inner()).entry(kind).or_insert(0) += 1;
    }
}

pub struct AppState {
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    backend: Arc<dyn CompletionBackend>,
    ledger: UsageLedger,
    counters: Counters,
    permits: Semaphore,
    waiting: AtomicUsize,
    options: ServerOptions,
    source: Option<ReloadSource>,
}

impl AppState {
    pub fn new(
        snapshot: Option<Snapshot>,
        backend: Arc<dyn CompletionBackend>,
        options: ServerOptions,
        source: Option<ReloadSource>,
    ) -> Arc<Self> {
        let permits = Semaphore::new(options.max_concurrent_backend_calls.max(1));
        Arc::new(Self {
            snapshot: RwLock::new(snapshot.map(Arc::new)),
            backend,
            ledger: UsageLedger::new(),
            counters: Counters::default(),
            permits,
            waiting: AtomicUsize::new(0),
            options,
            source,
        })
    }

    pub fn from_config(config: &GatewayConfig) -> anyhow::Result<Arc<Self>> {
        config.validate()?;
        let snapshot = Snapshot::load(&config.artifact, &config.registry, &config.embedder)?;
        let mock = match &config.mock_dir {
            Some(dir) => MockBackend::load_dir(dir).map_err(anyhow::Error::msg)?,
            None => MockBackend::new(),
        };
        let backend = MultiBackend { mock, network: Some(Box::new(HttpBackend::new(config.backend_timeout()))) };
        let options = ServerOptions {
            backend_timeout: config.backend_timeout(),
            max_concurrent_backend_calls: config.max_concurrent_backend_calls,
            max_queued_requests: config.max_queued_requests,
            metrics: config.metrics,
        };
        let source = ReloadSource { artifact: config.artifact.clone(), registry: config.registry.clone(), embedder: config.embedder.clone() };
        Ok(Self::new(Some(snapshot), Arc::new(backend), options, Some(source)))
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces the routing snapshot; in-flight requests keep the old one.
    pub fn install(&self, snapshot: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(snapshot));
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    /// Plain-text `name{labels} value` exposition.
    pub fn metrics_text(&self) -> String {
        let c = &self.counters;
        let totals = self.ledger.totals();
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(format!("ori_artifact_loaded {}", u8::from(self.snapshot().is_some())));
        line(format!("ori_requests_total{{endpoint=\"route\"}} {}", c.route_requests.load(Ordering::SeqCst)));
        line(format!("ori_requests_total{{endpoint=\"chat\"}} {}", c.chat_requests.load(Ordering::SeqCst)));
        line(format!("ori_fallbacks_total{{endpoint=\"route\"}} {}", c.route_fallbacks.load(Ordering::SeqCst)));
        line(format!("ori_fallbacks_total{{endpoint=\"chat\"}} {}", c.chat_fallbacks.load(Ordering::SeqCst)));
        line(format!("ori_rejected_total {}", c.rejected.load(Ordering::SeqCst)));
        for (kind, n) in c.errors.lock().unwrap_or_else(|e| e.into_inner()).iter() {
            line(format!("ori_errors_total{{kind=\"{kind}\"}} {n}"));
        }
        line(format!("ori_dispatches_total {}", totals.requests()));
        for (model, n) in &totals.dispatches {
            line(format!("ori_model_dispatches_total{{model=\"{model}\"}} {n}"));
        }
        line(format!("ori_prompt_tokens_total {}", totals.prompt_tokens));
        line(format!("ori_completion_tokens_total {}", totals.completion_tokens));
        line(format!("ori_cost_usd_total {}", totals.cost_usd));
        line(format!("ori_backend_seconds_total {}", totals.wall_seconds));
        out
    }
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/route", post(route_handler))
        .route("/v1/chat/completions", post(chat_handler))
        .route("/v1/usage", get(usage_handler))
        .route("/metrics", get(metrics_handler))
        .route("/admin/reload", post(reload_handler))
        .route("/healthz", get(health_handler))
        .with_state(state)
}

pub async fn serve(config: GatewayConfig) -> anyhow::Result<()> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    model_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into(), model_id: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"type": self.kind, "message": self.message});
        if let Some(m) = self.model_id {
            error["model_id"] = m.into();
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

fn router_error(e: RouterError) -> ApiError {
    match e {
        RouterError::EmptyRegistry => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_enabled_model", e.to_string()),
        RouterError::Embedding(ori_core::embedding::EmbedError::EmptyText { .. }) => {
            ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string())
        }
        RouterError::Embedding(_) => ApiError::new(StatusCode::BAD_GATEWAY, "embedding_error", e.to_string()),
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "routing_error", e.to_string()),
    }
}

fn dispatch_error(e: DispatchError) -> ApiError {
    let (status, kind) = match &e {
        DispatchError::Timeout { .. } => (StatusCode::GATEWAY_TIMEOUT, "backend_timeout"),
        DispatchError::Disabled { .. } => (StatusCode::SERVICE_UNAVAILABLE, "model_disabled"),
        _ => (StatusCode::BAD_GATEWAY, "backend_error"),
    };
    ApiError { status, kind, model_id: Some(e.model_id().to_string()), message: e.to_string() }
}

impl AppState {
    fn require_snapshot(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.snapshot()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_artifact", "no routing artifact is loaded"))
    }

    fn fail(&self, e: ApiError) -> ApiError {
        self.counters.error(e.kind);
        e
    }
}

async fn decide(snapshot: Arc<Snapshot>, text: String) -> Result<RoutingDecision, ApiError> {
    tokio::task::spawn_blocking(move || route(&snapshot.artifact, &snapshot.registry, &snapshot.embedder, &text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(router_error)
}

#[derive(Deserialize)]
struct RouteBody {
    text: String,
}

async fn route_handler(State(state): State<Arc<AppState>>, body: Result<Json<RouteBody>, JsonRejection>) -> Response {
    state.counters.route_requests.fetch_add(1, Ordering::SeqCst);
    let result = async {
        let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text()))?;
        if body.text.trim().is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", "`text` must be non-empty"));
        }
        let snapshot = state.require_snapshot()?;
        decide(snapshot, body.text).await
    }
    .await;
    match result {
        Ok(decision) => {
            if decision.fallback_used {
                state.counters.route_fallbacks.fetch_add(1, Ordering::SeqCst);
            }
            Json(decision).into_response()
        }
        Err(e) => state.fail(e).into_response(),
    }
}

/// Text of the last user message; array content keeps its text parts.
fn last_user_text(body: &Value) -> Option<String> {
    let messages = body.get("messages")?.as_array()?;
    let last = messages.iter().rev().find(|m| m.get("role").and_then(Value::as_str) == Some("user"))?;
    match last.get("content")? {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts
                .iter()
                .filter(|p| p.get("type").and_then(Value::as_str) == Some("text"))
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            (!texts.is_empty()).then(|| texts.join("\n"))
        }
        _ => None,
    }
}

async fn chat_handler(State(state): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> Response {
    state.counters.chat_requests.fetch_add(1, Ordering::SeqCst);
    match chat(&state, body).await {
        Ok(response) => response,
        Err(e) => state.fail(e).into_response(),
    }
}

async fn chat(state: &Arc<AppState>, body: Result<Json<Value>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text()))?;
    let text = last_user_text(&body)
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", "request needs a non-empty user message"))?;
    let params = GenerationParams {
        max_tokens: body.get("max_tokens").and_then(Value::as_u64).map(|v| v.min(u64::from(u32::MAX)) as u32),
        temperature: body.get("temperature").and_then(Value::as_f64),
    };
    let snapshot = state.require_snapshot()?;
    let decision = decide(snapshot.clone(), text.clone()).await?;
    if decision.fallback_used {
        state.counters.chat_fallbacks.fetch_add(1, Ordering::SeqCst);
    }
    let card = snapshot
        .registry
        .get(&decision.model_id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "routing_error", "routed model missing from registry"))?;

    let _permit = match state.permits.try_acquire() {
        Ok(p) => p,
        Err(_) => {
            if state.waiting.fetch_add(1, Ordering::SeqCst) >= state.options.max_queued_requests {
                state.waiting.fetch_sub(1, Ordering::SeqCst);
                state.counters.rejected.fetch_add(1, Ordering::SeqCst);
                return Err(ApiError::new(StatusCode::TOO_MANY_REQUESTS, "overloaded", "backend queue is full"));
            }
            let permit = state.permits.acquire().await;
            state.waiting.fetch_sub(1, Ordering::SeqCst);
            permit.map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting_down", "gateway is shutting down"))?
        }
    };

    let backend = state.backend.clone();
    let timeout = state.options.backend_timeout;
    let model_id = card.model_id.clone();
    let messages = body.get("messages").cloned();
    let call = tokio::task::spawn_blocking(move || {
        let request = CompletionRequest { prompt_id: None, prompt: &text, messages: messages.as_ref(), params: &params };
        dispatch_completion(backend.as_ref(), &card, &request)
    });
    let (completion, usage) = match tokio::time::timeout(timeout, call).await {
        Err(_) => {
            return Err(dispatch_error(DispatchError::Timeout { model_id, after_secs: timeout.as_secs_f64() }));
        }
        Ok(joined) => joined
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
            .map_err(dispatch_error)?,
    };
    state.ledger.record(usage.clone());

    let payload = completion.raw.clone().unwrap_or_else(|| {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({
            "id": format!("ori-{created}-{}", state.ledger.totals().requests()),
            "object": "chat.completion",
            "created": created,
            "model": usage.model_id,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": completion.text}, "finish_reason": "stop"}],
            "usage": {
                "prompt_tokens": usage.prompt_tokens,
                "completion_tokens": usage.completion_tokens,
                "total_tokens": usage.prompt_tokens + usage.completion_tokens,
            },
        })
    });
    let mut response = Json(payload).into_response();
    let headers = response.headers_mut();
    let model = HeaderValue::from_str(&decision.model_id)
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "model id is not a valid header value"))?;
    headers.insert(HeaderName::from_static(MODEL_HEADER), model);
    headers.insert(HeaderName::from_static(CLUSTER_HEADER), HeaderValue::from(decision.cluster));
    Ok(response)
}

async fn usage_handler(State(state): State<Arc<AppState>>) -> Response {
    Json(state.ledger.snapshot()).into_response()
}

async fn metrics_handler(State(state): State<Arc<AppState>>) -> Response {
    if !state.options.metrics {
        return StatusCode::NOT_FOUND.into_response();
    }
    ([("content-type", "text/plain; version=0.0.4")], state.metrics_text()).into_response()
}

async fn reload_handler(State(state): State<Arc<AppState>>) -> Response {
    let Some(source) = state.source.clone() else {
        return ApiError::new(StatusCode::CONFLICT, "no_source", "gateway was started without reloadable paths").into_response();
    };
    let loaded = tokio::task::spawn_blocking(move || Snapshot::load(&source.artifact, &source.registry, &source.embedder)).await;
    match loaded {
        Ok(Ok(snapshot)) => {
            let mut summary = String::new();
            let _ = write!(summary, "k={} models={}", snapshot.artifact.meta.k, snapshot.registry.len());
            state.install(snapshot);
            tracing::info!("reloaded routing snapshot ({summary})");
            Json(json!({"status": "reloaded", "summary": summary})).into_response()
        }
        Ok(Err(e)) => state.fail(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "reload_failed", format!("{e:#}"))).into_response(),
        Err(e) => state.fail(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())).into_response(),
    }
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    Json(json!({"artifact_loaded": state.snapshot().is_some()})).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_user_message_extraction() {
        let body = json!({"messages": [
            {"role": "user", "content": "first"},
            {"role": "assistant", "content": "reply"},
            {"role": "user", "content": [{"type": "text", "text": "a"}, {"type": "image_url"}, {"type": "text", "text": "b"}]},
        ]});
        assert_eq!(last_user_text(&body).as_deref(), Some("a\nb"));
        assert_eq!(last_user_text(&json!({"messages": [{"role": "system", "content": "x"}]})), None);
        assert_eq!(last_user_text(&json!({})), None);
    }
}
