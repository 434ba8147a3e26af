//! HTTP model backend.
//!
//! Requests are `POST {endpoint}` with `{role, prompt, media_urls, seed}` and an
//! `Idempotency-Key` header carrying the request hash. The reply body is the
//! role's JSON payload; non-JSON bodies are passed on as text so the schema
//! layer can try to recover an embedded object.

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{AgentRequest, Backend, BackendConfig, BackendError, GatewayError};

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    auth_env: Option<String>,
    media_base: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::config(format!("{}: HTTP backend needs an endpoint", cfg.backend_id)))?;
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            auth_env: cfg
                .auth
                .as_ref()
                .map(|a| a.strip_prefix("env:").unwrap_or(a).to_string()),
            media_base: cfg.media_base_url.clone(),
        })
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.auth_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::Auth(format!("environment variable {var} is not set"))),
        }
    }
}

#[async_trait]
impl Backend for HttpBackend {
    async fn call(&self, req: &AgentRequest, _attempt: u32) -> Result<Value, BackendError> {
        let body = json!({
            "role": req.role,
            "prompt": req.effective_prompt(),
            "media_urls": req.media.iter().map(|m| m.url(self.media_base.as_deref())).collect::<Vec<_>>(),
            "seed": req.decode_seed,
        });
        let mut builder = self
            .client
            .post(&self.endpoint)
            .header("Idempotency-Key", req.hash())
            .json(&body);
        if let Some(token) = self.token()? {
            builder = builder.bearer_auth(token);
        }
        let resp = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let retry_after_ms = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|s| s * 1000);
        let text = resp.text().await.map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => Ok(serde_json::from_str(&text).unwrap_or(Value::String(text))),
            401 | 403 => Err(BackendError::Auth(format!("status {status}"))),
            408 | 504 => Err(BackendError::Timeout),
            429 => Err(BackendError::RateLimited { retry_after_ms }),
            500..=599 => Err(BackendError::Transport(format!("status {status}: {text}"))),
            _ => Err(BackendError::Rejected { status, body: text }),
        }
    }
}
