//! Uniform, mockable access to multimodal model backends.
//!
//! Every agent role (proposer, verifier, cued confirmer, question writer,
//! distractor writer, blind solver, skill synthesizer and the evaluated model
//! roles) goes through [`Gateway::invoke`]. A gateway routes each role to an
//! [`AgentClient`], which owns one backend plus its concurrency limit, retry
//! policy and timeout. Responses are validated against a strict per-role
//! schema; a malformed reply gets exactly one reformat retry.
//!
//! Calls are identified by a SHA-256 hash of the request. The gateway caches
//! completed calls by that hash, forwards every outcome to an optional
//! [`CallLog`], and can be seeded with recorded outcomes to replay a run
//! without touching any backend.

mod config;
pub mod http;
pub mod mock;
mod schema;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::model::BoxAnnotation;

pub use config::GatewayConfig;
pub use schema::parse_response;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Propose,
    Verify,
    Confirm,
    WriteMcq,
    RewriteDistractors,
    BlindSolve,
    SynthesizeSkill,
    Classify,
    Detect,
    AnswerVqa,
}

impl AgentRole {
    pub const ALL: [AgentRole; 10] = [
        AgentRole::Propose,
        AgentRole::Verify,
        AgentRole::Confirm,
        AgentRole::WriteMcq,
        AgentRole::RewriteDistractors,
        AgentRole::BlindSolve,
        AgentRole::SynthesizeSkill,
        AgentRole::Classify,
        AgentRole::Detect,
        AgentRole::AnswerVqa,
    ];

    /// Roles that must never see pixels.
    pub fn is_text_only(self) -> bool {
        matches!(self, AgentRole::BlindSolve | AgentRole::RewriteDistractors)
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            AgentRole::Propose => "propose",
            AgentRole::Verify => "verify",
            AgentRole::Confirm => "confirm",
            AgentRole::WriteMcq => "write_mcq",
            AgentRole::RewriteDistractors => "rewrite_distractors",
            AgentRole::BlindSolve => "blind_solve",
            AgentRole::SynthesizeSkill => "synthesize_skill",
            AgentRole::Classify => "classify",
            AgentRole::Detect => "detect",
            AgentRole::AnswerVqa => "answer_vqa",
        }
    }
}

/// Lazily resolved reference to video content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediaRef {
    Frame {
        sequence_id: String,
        frame_index: u64,
    },
    Clip {
        sequence_id: String,
        start_frame: u64,
        end_frame: u64,
        /// Whether box/mask overlays are burned into the rendered clip.
        #[serde(default)]
        overlay: bool,
    },
}

impl MediaRef {
    pub fn frame(sequence_id: impl Into<String>, frame_index: u64) -> Self {
        MediaRef::Frame {
            sequence_id: sequence_id.into(),
            frame_index,
        }
    }

    pub fn clip(sequence_id: impl Into<String>, start_frame: u64, end_frame: u64, overlay: bool) -> Self {
        MediaRef::Clip {
            sequence_id: sequence_id.into(),
            start_frame,
            end_frame,
            overlay,
        }
    }

    pub fn sequence_id(&self) -> &str {
        match self {
            MediaRef::Frame { sequence_id, .. } | MediaRef::Clip { sequence_id, .. } => sequence_id,
        }
    }

    /// URL handed to HTTP backends. Without a base the `media://` scheme is used.
    pub fn url(&self, base: Option<&str>) -> String {
        let base = base.map_or_else(|| "media:/".to_string(), |b| b.trim_end_matches('/').to_string());
        match self {
            MediaRef::Frame {
                sequence_id,
                frame_index,
            } => format!("{base}/{sequence_id}/frames/{frame_index}"),
            MediaRef::Clip {
                sequence_id,
                start_frame,
                end_frame,
                overlay,
            } => format!(
                "{base}/{sequence_id}/clips/{start_frame}-{end_frame}{}",
                if *overlay { "?overlay=1" } else { "" }
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub role: AgentRole,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    pub prompt: String,
    /// Skill text placed in front of the prompt.
    #[serde(default)]
    pub context: Option<String>,
    pub decode_seed: u64,
    /// Correlation id of the benchmark item or window this call concerns.
    #[serde(default)]
    pub item_id: Option<String>,
}

impl AgentRequest {
    pub fn new(role: AgentRole, prompt: impl Into<String>) -> Self {
        Self {
            role,
            media: Vec::new(),
            prompt: prompt.into(),
            context: None,
            decode_seed: 0,
            item_id: None,
        }
    }

    pub fn with_media(mut self, media: impl IntoIterator<Item = MediaRef>) -> Self {
        self.media.extend(media);
        self
    }

    pub fn with_context(mut self, context: Option<String>) -> Self {
        self.context = context;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.decode_seed = seed;
        self
    }

    pub fn with_item(mut self, item_id: impl Into<String>) -> Self {
        self.item_id = Some(item_id.into());
        self
    }

    /// Prompt as sent on the wire: context (if any), a blank line, then the prompt.
    pub fn effective_prompt(&self) -> String {
        match &self.context {
            Some(ctx) => format!("{ctx}\n\n{}", self.prompt),
            None => self.prompt.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.role.is_text_only() && !self.media.is_empty() {
            return Err(GatewayError::MediaNotAllowed(self.role));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedSpan {
    pub start_frame: u64,
    pub end_frame: u64,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqDraft {
    pub stem: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

/// Role-specific structured payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentResponse {
    Windows { windows: Vec<ProposedSpan> },
    Verdict { accept: bool, text: Option<String> },
    McqDrafts { drafts: Vec<McqDraft> },
    Distractors { distractors: Vec<String> },
    OptionIndex { index: Option<usize> },
    Classification { lesion_present: bool },
    Boxes { boxes: Vec<BoxAnnotation> },
    Skill { text: String },
}

/// Failure reported by a raw backend for a single attempt.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("backend rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GatewayError {
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("{role:?} response violates schema: {detail}")]
    SchemaViolation { role: AgentRole, detail: String },
    #[error("authentication failed: {detail}")]
    Auth { detail: String },
    #[error("transport failure: {detail}")]
    Transport { detail: String },
    #[error("backend rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("configuration: {detail}")]
    Config { detail: String },
    #[error("{0:?} is text-only and must not receive media")]
    MediaNotAllowed(AgentRole),
}

impl GatewayError {
    pub fn config(detail: impl Into<String>) -> Self {
        GatewayError::Config { detail: detail.into() }
    }
}

/// A model endpoint. `attempt` counts every call made for one logical request.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn call(&self, req: &AgentRequest, attempt: u32) -> Result<serde_json::Value, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpModel,
    DeterministicMock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token (`env:NAME` also accepted).
    #[serde(default)]
    pub auth: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub media_base_url: Option<String>,
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    60_000
}

impl BackendConfig {
    pub fn mock(backend_id: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind: BackendKind::DeterministicMock,
            endpoint: None,
            auth: None,
            max_concurrent: default_concurrency(),
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout(),
            media_base_url: None,
        }
    }

    pub fn http(backend_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::HttpModel,
            endpoint: Some(endpoint.into()),
            ..Self::mock(backend_id)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_concurrent == 0 {
            return Err(GatewayError::config(format!("{}: max_concurrent must be >= 1", self.backend_id)));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::config(format!("{}: max_attempts must be >= 1", self.backend_id)));
        }
        if self.kind == BackendKind::HttpModel && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(GatewayError::config(format!("{}: HTTP backend needs an endpoint", self.backend_id)));
        }
        Ok(())
    }
}

/// One backend behind a concurrency limit, retry policy and timeout.
pub struct AgentClient {
    cfg: BackendConfig,
    backend: Arc<dyn Backend>,
    permits: Arc<Semaphore>,
}

impl std::fmt::Debug for AgentClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentClient").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

const REFORMAT_SUFFIX: &str = "\n\nYour previous reply could not be parsed. Reply again with only the JSON object described above.";

impl AgentClient {
    pub fn new(cfg: BackendConfig, backend: Arc<dyn Backend>) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(Self {
            permits: Arc::new(Semaphore::new(cfg.max_concurrent)),
            cfg,
            backend,
        })
    }

    /// Builds the backend named by `cfg.kind`; mock configs need `mock`.
    pub fn from_config(cfg: BackendConfig, mock: Option<mock::MockBackend>) -> Result<Self, GatewayError> {
        let backend: Arc<dyn Backend> = match cfg.kind {
            BackendKind::HttpModel => Arc::new(http::HttpBackend::new(&cfg)?),
            BackendKind::DeterministicMock => Arc::new(
                mock.ok_or_else(|| GatewayError::config(format!("{}: no mock behaviors supplied", cfg.backend_id)))?,
            ),
        };
        Self::new(cfg, backend)
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    /// Validates, calls with retries, and parses into the role schema.
    pub async fn invoke(&self, req: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        req.validate()?;
        let mut attempt = 0u32;
        let raw = self.call_with_retry(req, &mut attempt).await?;
        match parse_response(req.role, &raw) {
            Ok(resp) => Ok(resp),
            Err(first) => {
                tracing::debug!(role = ?req.role, %first, "reformat retry");
                let mut again = req.clone();
                again.prompt.push_str(REFORMAT_SUFFIX);
                let raw = self.call_with_retry(&again, &mut attempt).await?;
                parse_response(req.role, &raw).map_err(|detail| GatewayError::SchemaViolation {
                    role: req.role,
                    detail,
                })
            }
        }
    }

    async fn call_with_retry(&self, req: &AgentRequest, attempt: &mut u32) -> Result<serde_json::Value, GatewayError> {
        let policy = self.cfg.retry;
        let mut tries = 0u32;
        loop {
            tries += 1;
            let this_attempt = *attempt;
            *attempt += 1;
            let result = {
                let _permit = self.permits.acquire().await.expect("semaphore never closed");
                match tokio::time::timeout(
                    Duration::from_millis(self.cfg.timeout_ms),
                    self.backend.call(req, this_attempt),
                )
                .await
                {
                    Ok(r) => r,
                    Err(_) => Err(BackendError::Timeout),
                }
            };
            let err = match result {
                Ok(v) => return Ok(v),
                Err(e) => e,
            };
            let retry_after = match &err {
                BackendError::Timeout | BackendError::Transport(_) => None,
                BackendError::RateLimited { retry_after_ms } => *retry_after_ms,
                BackendError::Auth(d) => return Err(GatewayError::Auth { detail: d.clone() }),
                BackendError::Rejected { status, body } => {
                    return Err(GatewayError::Rejected {
                        status: *status,
                        body: body.clone(),
                    })
                }
                BackendError::Config(d) => return Err(GatewayError::config(d.clone())),
            };
            if tries >= policy.max_attempts {
                return Err(match err {
                    BackendError::Timeout => GatewayError::Timeout { attempts: tries },
                    BackendError::RateLimited { .. } => GatewayError::RateLimited { attempts: tries },
                    other => GatewayError::Transport {
                        detail: other.to_string(),
                    },
                });
            }
            let backoff = retry_after.unwrap_or(policy.base_backoff_ms.saturating_mul(1 << (tries - 1).min(16)));
            tracing::debug!(backend = %self.cfg.backend_id, tries, backoff, %err, "retrying");
            tokio::time::sleep(Duration::from_millis(backoff)).await;
        }
    }
}

/// Outcome of one logical gateway call, keyed by request hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub request_hash: String,
    pub role: AgentRole,
    pub outcome: CallOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok(AgentResponse),
    Err(GatewayError),
}

impl CallOutcome {
    fn into_result(self) -> Result<AgentResponse, GatewayError> {
        match self {
            CallOutcome::Ok(r) => Ok(r),
            CallOutcome::Err(e) => Err(e),
        }
    }
}

/// Sink for call outcomes, e.g. a run journal.
pub trait CallLog: Send + Sync {
    fn record(&self, rec: &CallRecord);
}

/// In-memory [`CallLog`].
#[derive(Debug, Default)]
pub struct MemoryLog {
    records: Mutex<Vec<CallRecord>>,
}

impl MemoryLog {
    pub fn records(&self) -> Vec<CallRecord> {
        self.records.lock().unwrap().clone()
    }
}

impl CallLog for MemoryLog {
    fn record(&self, rec: &CallRecord) {
        self.records.lock().unwrap().push(rec.clone());
    }
}

/// Routes each role to a client; caches, logs and replays by request hash.
#[derive(Default)]
pub struct Gateway {
    routes: BTreeMap<AgentRole, Arc<AgentClient>>,
    done: Mutex<HashMap<String, CallOutcome>>,
    /// Replayed outcomes not yet forwarded to the log.
    unlogged: Mutex<HashMap<String, AgentRole>>,
    log: Option<Arc<dyn CallLog>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("routes", &self.routes).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(mut self, role: AgentRole, client: Arc<AgentClient>) -> Self {
        self.routes.insert(role, client);
        self
    }

    pub fn route_all(mut self, client: Arc<AgentClient>) -> Self {
        for role in AgentRole::ALL {
            self.routes.insert(role, client.clone());
        }
        self
    }

    pub fn with_log(mut self, log: Arc<dyn CallLog>) -> Self {
        self.log = Some(log);
        self
    }

    /// Pre-loads outcomes; matching requests never reach a backend. A
    /// replayed outcome is forwarded to the log on its first use.
    pub fn with_replay(self, records: impl IntoIterator<Item = CallRecord>) -> Self {
        {
            let mut done = self.done.lock().unwrap();
            let mut unlogged = self.unlogged.lock().unwrap();
            for r in records {
                unlogged.insert(r.request_hash.clone(), r.role);
                done.insert(r.request_hash, r.outcome);
            }
        }
        self
    }

    pub fn client(&self, role: AgentRole) -> Option<&Arc<AgentClient>> {
        self.routes.get(&role)
    }

    pub async fn invoke(&self, req: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        req.validate()?;
        let hash = req.hash();
        if let Some(prev) = self.done.lock().unwrap().get(&hash).cloned() {
            if let (Some(log), Some(role)) = (&self.log, self.unlogged.lock().unwrap().remove(&hash)) {
                log.record(&CallRecord {
                    request_hash: hash,
                    role,
                    outcome: prev.clone(),
                });
            }
            return prev.into_result();
        }
        let client = self
            .routes
            .get(&req.role)
            .ok_or_else(|| GatewayError::config(format!("no backend routed for {:?}", req.role)))?;
        let result = client.invoke(req).await;
        let outcome = match &result {
            Ok(r) => CallOutcome::Ok(r.clone()),
            Err(e) => CallOutcome::Err(e.clone()),
        };
        let first = {
            let mut done = self.done.lock().unwrap();
            if done.contains_key(&hash) {
                false
            } else {
                done.insert(hash.clone(), outcome.clone());
                true
            }
        };
        if first {
            if let Some(log) = &self.log {
                log.record(&CallRecord {
                    request_hash: hash,
                    role: req.role,
                    outcome,
                });
            }
        }
        result
    }
}
