use std::time::Duration;

use async_trait::async_trait;

use crate::{ChatBackend, CompletionRequest, CompletionResult, GatewayError};

pub const MOCK_NO_CLUE: &str = "【解读】(无提示) (mock)";

/// Offline backend whose reply is a pure function of the request.
///
/// If the final user message holds at least two 「…」 markers, the last two
/// are read as (punchline, original) and echoed back.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

fn quoted(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('「') {
        let after = &rest[open + '「'.len_utf8()..];
        let Some(close) = after.find('」') else { break };
        out.push(&after[..close]);
        rest = &after[close + '」'.len_utf8()..];
    }
    out
}

impl MockBackend {
    pub fn reply(request: &CompletionRequest) -> String {
        let marks = quoted(request.final_user_message().unwrap_or(""));
        match marks.as_slice() {
            [.., x, y] => format!("【解读】谐音「{x}」指「{y}」。(mock)"),
            _ => MOCK_NO_CLUE.to_string(),
        }
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        request.validate()?;
        Ok(CompletionResult {
            text: Self::reply(request),
            backend: "mock".into(),
            latency: Duration::ZERO,
            token_usage: None,
        })
    }
}
