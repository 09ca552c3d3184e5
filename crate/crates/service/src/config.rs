use std::path::{Path, PathBuf};
use std::time::Duration;

use duanzai_core::RetrievalConfig;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Service configuration, read from TOML. Every key is optional.
///
/// ```toml
/// [server]
/// host = "127.0.0.1"
/// port = 8080
///
/// [models]
/// crf_model = "model.json"      # absent: train on the bundled fixture at startup
/// lexicon = "lexicon.tsv"       # absent: bundled lexicon
/// lm = "lm.tsv"                 # absent: LM over the bundled fixture text
/// templates = "prompts.toml"    # absent: bundled prompt templates
///
/// [retrieval]
/// tau = 1.3
/// beta = 2.0
/// k = 5
///
/// [gateway]
/// backend = "mock"              # or "http", credentials from the environment
/// model = "gpt-4o-mini"
/// timeout_secs = 60
///
/// [sessions]
/// ttl_secs = 3600
/// persist_dir = "sessions"      # absent: memory only
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub models: ModelPaths,
    pub retrieval: RetrievalConfig,
    pub gateway: GatewayConfig,
    pub sessions: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Longest accepted message, in characters.
    pub max_message_chars: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            max_message_chars: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub crf_model: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    /// Overrides `DUANZAI_LLM_MODEL`.
    pub model: Option<String>,
    /// Overrides `DUANZAI_LLM_ENDPOINT`.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            model: None,
            endpoint: None,
            timeout_secs: 60,
        }
    }
}

impl GatewayConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub ttl_secs: u64,
    pub persist_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            ttl_secs: 3600,
            persist_dir: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let c: Config = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative model paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut c.models.crf_model,
            &mut c.models.lexicon,
            &mut c.models.lm,
            &mut c.models.templates,
            &mut c.sessions.persist_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let r = &self.retrieval;
        if !(r.tau >= 0.0 && r.tau.is_finite()) || !(r.beta >= 0.0 && r.beta.is_finite()) || r.k == 0 {
            return Err(ServiceError::Config("retrieval needs tau >= 0, beta >= 0, k >= 1".into()));
        }
        if self.sessions.ttl_secs == 0 {
            return Err(ServiceError::Config("sessions.ttl_secs must be positive".into()));
        }
        if self.server.max_message_chars == 0 {
            return Err(ServiceError::Config("server.max_message_chars must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.retrieval.k, 5);
        let c = Config::from_toml("[retrieval]\nbeta = 1.0\n[gateway]\nbackend = \"http\"\n").unwrap();
        assert_eq!(c.retrieval.beta, 1.0);
        assert_eq!(c.retrieval.tau, 1.3);
        assert_eq!(c.gateway.backend, BackendKind::Http);
    }

    #[test]
    fn example_file_matches_defaults() {
        let c = Config::from_toml(include_str!("../service.example.toml")).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("[retrieval]\nk = 0\n").is_err());
        assert!(Config::from_toml("[server]\nprot = 1\n").is_err());
        assert!(Config::from_toml("[gateway]\nbackend = \"spark\"\n").is_err());
    }
}
