use std::fmt;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::{ChatBackend, CompletionRequest, CompletionResult, GatewayError, Message, TokenUsage};

pub const ENV_ENDPOINT: &str = "DUANZAI_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "DUANZAI_LLM_API_KEY";
pub const ENV_MODEL: &str = "DUANZAI_LLM_MODEL";

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }
}

/// Bearer token that never shows up in `Debug` output.
#[derive(Clone)]
struct ApiKey(String);

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub retry: RetryPolicy,
    api_key: ApiKey,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            retry: RetryPolicy::default(),
            api_key: ApiKey(api_key.into()),
        }
    }

    /// Reads the endpoint, key and model from the environment. The key is
    /// mandatory.
    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let non_empty = |k| get(k).filter(|v: &String| !v.trim().is_empty());
        let key = non_empty(ENV_API_KEY).ok_or(GatewayError::MissingCredential(ENV_API_KEY))?;
        let endpoint = non_empty(ENV_ENDPOINT).ok_or(GatewayError::InvalidRequest(format!("{ENV_ENDPOINT} is not set")))?;
        let model = non_empty(ENV_MODEL).unwrap_or_else(|| "default".into());
        Ok(Self::new(endpoint, key, model))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    stream: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Chat-completions client: POSTs `{model, messages, temperature,
/// max_tokens}` with a bearer token and reads `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn redact(&self, text: &str) -> String {
        let key = &self.config.api_key.0;
        if key.is_empty() {
            text.to_string()
        } else {
            text.replace(key.as_str(), "<redacted>")
        }
    }

    async fn attempt(&self, request: &CompletionRequest) -> Result<(String, Option<TokenUsage>), GatewayError> {
        let model = if request.model_name.is_empty() {
            &self.config.model
        } else {
            &request.model_name
        };
        let body = WireRequest {
            model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stream: false,
        };
        let sent = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.config.api_key.0)
            .timeout(request.timeout)
            .json(&body)
            .send()
            .await;
        let response = match sent {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(GatewayError::Timeout(request.timeout)),
            // reqwest errors carry the URL, never headers
            Err(e) => return Err(GatewayError::Transport(self.redact(&e.without_url().to_string()))),
        };
        let status = response.status();
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Err(GatewayError::Timeout(request.timeout)),
            Err(e) => return Err(GatewayError::Transport(self.redact(&e.without_url().to_string()))),
        };
        if !status.is_success() {
            let excerpt: String = text.chars().take(BODY_EXCERPT).collect();
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: self.redact(&excerpt),
            });
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(self.redact(&e.to_string())))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Malformed("no choices[0].message.content".into()))?;
        let usage = parsed.usage.map(|u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok((content, usage))
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        request.validate()?;
        let start = Instant::now();
        let policy = self.config.retry;
        let mut retry = 0;
        loop {
            match self.attempt(request).await {
                Ok((text, token_usage)) => {
                    return Ok(CompletionResult {
                        text,
                        backend: self.name().to_string(),
                        latency: start.elapsed(),
                        token_usage,
                    })
                }
                Err(e) if e.is_transient() && retry < policy.max_retries => {
                    retry += 1;
                    let delay = policy.backoff(retry);
                    tracing::warn!(error = %e, retry, ?delay, "transient backend failure, retrying");
                    tokio::time::sleep(delay).await;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
