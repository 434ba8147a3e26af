use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{ReviewError, ReviewQueue};
use crate::error::{Error, Result};
use crate::model::FrameProvider;
use crate::pipeline::Decision;

/// Service settings, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Append-only decision log; replayed at startup.
    pub log_path: PathBuf,
    /// Directory holding the built UI bundle.
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
    #[serde(default)]
    pub token: Option<String>,
    /// Environment variable holding the shared token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_ttl")]
    pub lease_ttl_secs: u64,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_ttl() -> u64 {
    super::DEFAULT_LEASE_TTL.as_secs()
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve_token(&self) -> Result<Option<String>> {
        match (&self.token, &self.token_env) {
            (Some(t), _) => Ok(Some(t.clone())),
            (None, Some(var)) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::Config(format!("token env var {var} is not set"))),
            (None, None) => Ok(None),
        }
    }

    pub fn lease_ttl(&self) -> Duration {
        Duration::from_secs(self.lease_ttl_secs)
    }
}

/// Shared state behind every handler.
#[derive(Clone)]
pub struct ServerState {
    pub queue: Arc<ReviewQueue>,
    /// Frame providers by sequence id.
    pub frames: HashMap<String, Arc<dyn FrameProvider>>,
    pub token: Option<String>,
}

impl ServerState {
    pub fn new(queue: Arc<ReviewQueue>) -> Self {
        Self {
            queue,
            frames: HashMap::new(),
            token: None,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn with_frames(mut self, sequence_id: impl Into<String>, provider: Arc<dyn FrameProvider>) -> Self {
        self.frames.insert(sequence_id.into(), provider);
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ReviewerQuery {
    reviewer: Option<String>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    detail: String,
}

fn error_response(status: StatusCode, error: &'static str, detail: String) -> Response {
    (status, Json(ErrorBody { error, detail })).into_response()
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ReviewError::UnknownWindow(_) => (StatusCode::NOT_FOUND, "unknown_window"),
            ReviewError::AlreadyDecided(_) => (StatusCode::CONFLICT, "already_decided"),
            ReviewError::LeaseHeld { .. } => (StatusCode::CONFLICT, "lease_held"),
            ReviewError::MissingOverlay(_) => (StatusCode::UNPROCESSABLE_ENTITY, "missing_overlay"),
            ReviewError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        error_response(status, kind, self.to_string())
    }
}

fn reviewer_id(headers: &HeaderMap, query: &ReviewerQuery) -> String {
    headers
        .get("x-reviewer")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or_else(|| query.reviewer.clone())
        .filter(|r| !r.is_empty())
        .unwrap_or_else(|| "anonymous".into())
}

async fn next_item(State(st): State<ServerState>, headers: HeaderMap, Query(q): Query<ReviewerQuery>) -> Response {
    match st.queue.next_item(&reviewer_id(&headers, &q)) {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn decide(
    State(st): State<ServerState>,
    UrlPath(window_id): UrlPath<String>,
    headers: HeaderMap,
    Query(q): Query<ReviewerQuery>,
    Json(body): Json<DecisionBody>,
) -> Response {
    let reviewer = reviewer_id(&headers, &q);
    match st.queue.submit_decision(&window_id, body.decision, body.note, &reviewer) {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn stats(State(st): State<ServerState>) -> Response {
    Json(st.queue.stats()).into_response()
}

async fn frame(State(st): State<ServerState>, UrlPath((window_id, i)): UrlPath<(String, u64)>) -> Response {
    let Some(item) = st.queue.item(&window_id) else {
        return ReviewError::UnknownWindow(window_id).into_response();
    };
    if !(item.start_frame..=item.end_frame).contains(&i) {
        return error_response(
            StatusCode::NOT_FOUND,
            "frame_out_of_range",
            format!("frame {i} outside {}..={}", item.start_frame, item.end_frame),
        );
    }
    let Some(provider) = st.frames.get(&item.sequence_id) else {
        return error_response(
            StatusCode::NOT_FOUND,
            "no_frame_provider",
            format!("no frames for sequence {}", item.sequence_id),
        );
    };
    match provider.frame(i) {
        Some(bytes) => ([(header::CONTENT_TYPE, provider.content_type().to_string())], bytes).into_response(),
        None => error_response(StatusCode::NOT_FOUND, "frame_missing", format!("frame {i} unavailable")),
    }
}

async fn require_token(State(st): State<ServerState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return error_response(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong token".into());
        }
    }
    next.run(req).await
}

/// Review API routes, plus the UI bundle when `ui_dir` is given.
pub fn router(state: ServerState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/review/next", get(next_item))
        .route("/api/review/stats", get(stats))
        .route("/api/review/{window_id}/decision", post(decide))
        .route("/api/review/{window_id}/frames/{i}", get(frame))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(cfg: &ServerConfig, state: ServerState) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| Error::Config(format!("bind {}: {e}", cfg.bind)))?;
    tracing::info!(addr = %cfg.bind, "review service listening");
    axum::serve(listener, router(state, cfg.ui_dir.as_deref()))
        .await
        .map_err(|e| Error::Config(format!("serve: {e}")))
}
