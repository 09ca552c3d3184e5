use duanzai_core::prompt::{build_prompt, Clue, PromptBundle, PromptMode, Role};
use duanzai_gateway::{ChatBackend, CompletionRequest, GatewayError};
use serde::Serialize;

use crate::analysis::{analyze, Analysis, Resources};
use crate::session::{ChatSession, Turn, TurnError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatReply {
    pub reply: String,
    pub analysis: Analysis,
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    /// Rejected before anything was recorded.
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    /// The model call failed; the session holds the user turn and an error
    /// turn.
    #[error("model backend failed: {error}")]
    Backend { error: GatewayError, analysis: Analysis },
}

/// Per-request knobs forwarded to the backend.
#[derive(Debug, Clone)]
pub struct ChatOptions {
    pub model_name: String,
    pub timeout: std::time::Duration,
}

impl Default for ChatOptions {
    fn default() -> Self {
        Self {
            model_name: String::new(),
            timeout: duanzai_gateway::DEFAULT_TIMEOUT,
        }
    }
}

/// The prompt sent for `message`: clue-provided when the analysis has a
/// punchline and a candidate, zero-shot otherwise. Earlier turns are not
/// included.
pub fn prompt_for(message: &str, analysis: &Analysis, resources: &Resources) -> PromptBundle {
    let clue = analysis.clue().map(|(p, o)| Clue {
        punchline: p.to_string(),
        original: o.to_string(),
    });
    let mode = if clue.is_some() {
        PromptMode::ClueProvided
    } else {
        PromptMode::ZeroShot
    };
    build_prompt(mode, message, clue.as_ref(), None, &resources.templates)
        .expect("zero-shot and clue prompts need no exemplars")
}

/// Runs one exchange: analyze, prompt, call the backend and append the turn
/// pair. On backend failure the pair is still appended, with the user turn
/// and the assistant turn both carrying the error.
pub async fn chat(
    session: &mut ChatSession,
    message: &str,
    analysis: Analysis,
    resources: &Resources,
    backend: &dyn ChatBackend,
    options: &ChatOptions,
) -> Result<ChatReply, ChatError> {
    if message.trim().is_empty() {
        return Err(ChatError::InvalidMessage("message is empty".into()));
    }
    let bundle = prompt_for(message, &analysis, resources);
    let mut request = CompletionRequest::new(bundle.messages, options.model_name.clone());
    request.timeout = options.timeout;
    let user = |error: Option<TurnError>| Turn {
        role: Role::User,
        text: message.to_string(),
        analysis: Some(analysis.clone()),
        error,
    };
    match backend.complete(&request).await {
        Ok(result) => {
            session.push_exchange(
                user(None),
                Turn {
                    role: Role::Assistant,
                    text: result.text.clone(),
                    analysis: None,
                    error: None,
                },
            );
            Ok(ChatReply {
                reply: result.text,
                analysis,
            })
        }
        Err(error) => {
            tracing::warn!(error = %error, session = %session.session_id, "backend call failed");
            let marker = TurnError {
                kind: error.kind().to_string(),
                message: error.to_string(),
            };
            session.push_exchange(
                user(Some(marker.clone())),
                Turn {
                    role: Role::Assistant,
                    text: format!("[error: {}]", marker.kind),
                    analysis: None,
                    error: Some(marker),
                },
            );
            Err(ChatError::Backend { error, analysis })
        }
    }
}

/// [`analyze`] then [`chat`], for callers without a blocking pool.
pub async fn chat_with_analysis(
    session: &mut ChatSession,
    message: &str,
    resources: &Resources,
    backend: &dyn ChatBackend,
    options: &ChatOptions,
) -> Result<ChatReply, ChatError> {
    let analysis = analyze(message, resources);
    chat(session, message, analysis, resources, backend, options).await
}
