use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mock::MockBackend;
use super::{AgentClient, AgentRole, BackendConfig, BackendKind, Gateway, GatewayError};

/// Backends plus the role each one serves, read from TOML.
///
/// ```toml
/// default_backend = "flash"
///
/// [[backend]]
/// backend_id = "flash"
/// kind = "http_model"
/// endpoint = "https://models.example/v1/agent"
/// auth = "MODEL_TOKEN"
///
/// [routes]
/// propose = "flash"
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub routes: BTreeMap<AgentRole, String>,
    /// Serves every role without an explicit route.
    #[serde(default)]
    pub default_backend: Option<String>,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn backend(&self, backend_id: &str) -> Option<&BackendConfig> {
        self.backends.iter().find(|b| b.backend_id == backend_id)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        for (i, b) in self.backends.iter().enumerate() {
            b.validate()?;
            if self.backends[..i].iter().any(|o| o.backend_id == b.backend_id) {
                return Err(GatewayError::config(format!("duplicate backend `{}`", b.backend_id)));
            }
        }
        for id in self.routes.values().chain(&self.default_backend) {
            if self.backend(id).is_none() {
                return Err(GatewayError::config(format!("route names unknown backend `{id}`")));
            }
        }
        Ok(())
    }

    /// Builds one client per backend. Mock backends get their behaviors
    /// from `mock`, called with the backend config.
    pub fn build(&self, mock: impl Fn(&BackendConfig) -> Option<MockBackend>) -> Result<Gateway, GatewayError> {
        self.validate()?;
        let mut clients = BTreeMap::new();
        for b in &self.backends {
            let m = if b.kind == BackendKind::DeterministicMock { mock(b) } else { None };
            clients.insert(b.backend_id.as_str(), Arc::new(AgentClient::from_config(b.clone(), m)?));
        }
        let mut gw = Gateway::new();
        for role in AgentRole::ALL {
            if let Some(id) = self.routes.get(&role).or(self.default_backend.as_ref()) {
                gw = gw.route(role, clients[id.as_str()].clone());
            }
        }
        Ok(gw)
    }

    /// A gateway sending every role to one named backend.
    pub fn build_single(&self, backend_id: &str, mock: impl Fn(&BackendConfig) -> Option<MockBackend>) -> Result<Gateway, GatewayError> {
        let b = self
            .backend(backend_id)
            .ok_or_else(|| GatewayError::config(format!("unknown backend `{backend_id}`")))?;
        let m = if b.kind == BackendKind::DeterministicMock { mock(b) } else { None };
        Ok(Gateway::new().route_all(Arc::new(AgentClient::from_config(b.clone(), m)?)))
    }
}
