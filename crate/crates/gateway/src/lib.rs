//! Backend-agnostic chat completion: a JSON-over-HTTP client for
//! chat-completions endpoints and a deterministic mock for offline runs.

mod http;
mod mock;

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use duanzai_core::prompt::{Message, Role};
pub use http::{HttpBackend, HttpConfig, RetryPolicy, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use mock::{MockBackend, MOCK_NO_CLUE};

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl GatewayError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    /// Short machine-readable kind for API error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Timeout(_) => "timeout",
            GatewayError::Status { .. } => "upstream_status",
            GatewayError::Malformed(_) => "malformed_response",
            GatewayError::MissingCredential(_) => "missing_credential",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Transport(_) => "transport",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "millis")]
    pub timeout: Duration,
}

impl CompletionRequest {
    /// Temperature 0, 512 tokens, 60 s.
    pub fn new(messages: Vec<Message>, model_name: impl Into<String>) -> Self {
        Self {
            messages,
            model_name: model_name.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(m.into()));
        if self.messages.is_empty() {
            return bad("no messages");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be finite and non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if self.timeout.is_zero() {
            return bad("timeout must be positive");
        }
        Ok(())
    }

    pub fn final_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend: String,
    #[serde(with = "millis")]
    pub latency: Duration,
    pub token_usage: Option<TokenUsage>,
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError>;
}

impl fmt::Debug for dyn ChatBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChatBackend({})", self.name())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}
