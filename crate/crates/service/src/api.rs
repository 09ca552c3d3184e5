use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use duanzai_gateway::{ChatBackend, HttpBackend, HttpConfig, MockBackend};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;

use crate::analysis::{analyze, Analysis, Resources};
use crate::chat::{chat, ChatError, ChatOptions};
use crate::config::{BackendKind, Config};
use crate::session::{now_millis, ChatSession, JsonDirPersistence, SessionStore};
use crate::ServiceError;

/// Shared by every handler.
pub struct AppState {
    pub resources: Arc<Resources>,
    pub backend: Arc<dyn ChatBackend>,
    pub sessions: SessionStore,
    pub options: ChatOptions,
    pub max_message_chars: usize,
}

impl AppState {
    pub fn new(resources: Resources, backend: Arc<dyn ChatBackend>, sessions: SessionStore) -> Self {
        Self {
            resources: Arc::new(resources),
            backend,
            sessions,
            options: ChatOptions::default(),
            max_message_chars: 2000,
        }
    }

    /// Loads models and builds the backend named in `config`.
    pub fn from_config(config: &Config) -> Result<Self, ServiceError> {
        let resources = Resources::load(&config.models, config.retrieval)?;
        let backend: Arc<dyn ChatBackend> = match config.gateway.backend {
            BackendKind::Mock => Arc::new(MockBackend),
            BackendKind::Http => {
                let http = HttpConfig::from_lookup(|k| {
                    let over = match k {
                        duanzai_gateway::ENV_ENDPOINT => config.gateway.endpoint.clone(),
                        duanzai_gateway::ENV_MODEL => config.gateway.model.clone(),
                        _ => None,
                    };
                    over.or_else(|| std::env::var(k).ok())
                })?;
                Arc::new(HttpBackend::new(http)?)
            }
        };
        let ttl = Duration::from_secs(config.sessions.ttl_secs);
        let sessions = match &config.sessions.persist_dir {
            Some(dir) => SessionStore::with_persistence(
                ttl,
                Box::new(JsonDirPersistence::new(dir).map_err(|e| ServiceError::Resource(e.to_string()))?),
            ),
            None => SessionStore::new(ttl),
        };
        let mut state = Self::new(resources, backend, sessions);
        state.options = ChatOptions {
            model_name: config.gateway.model.clone().unwrap_or_default(),
            timeout: config.gateway.timeout(),
        };
        state.max_message_chars = config.server.max_message_chars;
        Ok(state)
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    kind: String,
    message: String,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(json!({ "error": ErrorBody { kind: kind.into(), message: message.into() } })),
    )
        .into_response()
}

#[derive(Debug, Deserialize)]
pub struct AnalyzeRequest {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct ChatResponse {
    pub session_id: String,
    pub reply: String,
    pub analysis: Analysis,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

fn too_long(state: &AppState, text: &str) -> Option<Response> {
    let n = text.chars().count();
    (n > state.max_message_chars).then(|| {
        error(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_long",
            format!("{n} characters, limit {}", state.max_message_chars),
        )
    })
}

/// Tagging and decoding are CPU-bound; keep them off the async workers.
async fn analyze_blocking(state: &AppState, text: String) -> Analysis {
    let resources = state.resources.clone();
    tokio::task::spawn_blocking(move || analyze(&text, &resources))
        .await
        .unwrap_or_else(|e| {
            tracing::error!(error = %e, "analysis task failed");
            Analysis::empty()
        })
}

async fn analyze_handler(State(state): State<Arc<AppState>>, Json(req): Json<AnalyzeRequest>) -> Response {
    if let Some(r) = too_long(&state, &req.text) {
        return r;
    }
    Json(analyze_blocking(&state, req.text).await).into_response()
}

async fn chat_handler(State(state): State<Arc<AppState>>, Json(req): Json<ChatRequest>) -> Response {
    if req.message.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "invalid_request", "message is empty");
    }
    if let Some(r) = too_long(&state, &req.message) {
        return r;
    }
    let (session_id, handle) = state.sessions.get_or_create(req.session_id.as_deref());
    let analysis = analyze_blocking(&state, req.message.clone()).await;
    let mut session = handle.lock().await;
    let outcome = chat(
        &mut session,
        &req.message,
        analysis,
        &state.resources,
        state.backend.as_ref(),
        &state.options,
    )
    .await;
    state.sessions.persist(&session);
    drop(session);
    match outcome {
        Ok(reply) => Json(ChatResponse {
            session_id,
            reply: reply.reply,
            analysis: reply.analysis,
        })
        .into_response(),
        Err(ChatError::Backend { error, analysis }) => (
            StatusCode::BAD_GATEWAY,
            Json(json!({
                "session_id": session_id,
                "error": ErrorBody { kind: error.kind().into(), message: error.to_string() },
                "analysis": analysis,
            })),
        )
            .into_response(),
        Err(ChatError::InvalidMessage(m)) => error(StatusCode::BAD_REQUEST, "invalid_request", m),
    }
}

async fn session_handler(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.sessions.get(&id) {
        Some(h) => {
            let s: ChatSession = h.lock().await.clone();
            Json(s).into_response()
        }
        None => error(StatusCode::NOT_FOUND, "not_found", format!("no session {id}")),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api/analyze", post(analyze_handler))
        .route("/api/chat", post(chat_handler))
        .route("/api/session/{id}", get(session_handler))
        .layer(TraceLayer::new_for_http())
        // the browser UI may be served from another origin
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves on an already-bound listener until `shutdown` resolves. Expired
/// sessions are swept once a minute.
pub async fn serve_on<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> Result<(), ServiceError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let sweeper = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let n = state.sessions.evict_expired(now_millis());
                if n > 0 {
                    tracing::info!(evicted = n, "expired sessions dropped");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result.map_err(|e| ServiceError::Io(e.to_string()))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown signal received");
}

/// Loads everything, binds `host:port` and serves until SIGINT or SIGTERM.
pub async fn serve(config: Config) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let addr = format!("{}:{}", config.server.host, config.server.port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|e| ServiceError::Bind(format!("{addr}: {e}")))?;
    let local: SocketAddr = listener.local_addr().map_err(|e| ServiceError::Io(e.to_string()))?;
    tracing::info!(%local, backend = state.backend.name(), "listening");
    serve_on(listener, state, shutdown_signal()).await
}
