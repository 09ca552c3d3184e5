//! The chat pipeline behind an HTTP API: each message is tagged for a
//! punchline, the original phrase is retrieved, and both go to the language
//! model as a clue.

pub mod analysis;
pub mod api;
pub mod chat;
pub mod config;
pub mod session;

use thiserror::Error;

pub use analysis::{analyze, Analysis, Punchline, Resources};
pub use api::{router, serve, serve_on, AppState};
pub use chat::{chat, chat_with_analysis, ChatError, ChatOptions, ChatReply};
pub use config::Config;
pub use session::{ChatSession, SessionStore, Turn};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("loading resources: {0}")]
    Resource(String),
    #[error("cannot bind {0}")]
    Bind(String),
    #[error(transparent)]
    Gateway(#[from] duanzai_gateway::GatewayError),
    #[error("io: {0}")]
    Io(String),
}
