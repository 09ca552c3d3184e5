//! Zero-shot, five-shot and clue-provided prompt assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_TEMPLATES: &str = include_str!("../data/prompt_templates.toml");

/// Exemplar pairs consumed by a five-shot prompt.
pub const FIVE_SHOT: usize = 5;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{mode} prompt needs a clue (punchline, original)")]
    MissingClue { mode: PromptMode },
    #[error("five-shot prompt needs at least {FIVE_SHOT} exemplars, got {got}")]
    NotEnoughExemplars { got: usize },
    #[error("template `{template}`: {reason}")]
    Template { template: String, reason: String },
    #[error("template file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("exemplar line {line}: {source}")]
    Exemplar {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FiveShot,
    ClueProvided,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::FiveShot => "five-shot",
            PromptMode::ClueProvided => "clue-provided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clue {
    pub punchline: String,
    pub original: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExemplarSet(pub Vec<Exemplar>);

impl ExemplarSet {
    /// One `{"text": ..., "explanation": ...}` object per line.
    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Self, PromptError> {
        let mut out = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex = serde_json::from_str(&line).map_err(|source| PromptError::Exemplar {
                line: idx + 1,
                source,
            })?;
            out.push(ex);
        }
        Ok(Self(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub messages: Vec<Message>,
    /// The clue injected into a clue-provided prompt.
    pub provenance: Option<Clue>,
}

impl PromptBundle {
    pub fn final_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Hole(String),
}

/// A template string split at its `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    /// Parses `source` and checks it names exactly the `required`
    /// placeholders, each once.
    pub fn parse(name: &str, source: &str, required: &[&str]) -> Result<Self, PromptError> {
        let err = |reason: String| PromptError::Template {
            template: name.to_string(),
            reason,
        };
        let mut segments = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            let Some(len) = rest[open..].find('}') else {
                return Err(err("unclosed `{`".into()));
            };
            let hole = &rest[open + 1..open + len];
            if !required.contains(&hole) {
                return Err(err(format!("unknown placeholder {{{hole}}}")));
            }
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_string()));
            }
            segments.push(Segment::Hole(hole.to_string()));
            rest = &rest[open + len + 1..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        for r in required {
            let n = segments
                .iter()
                .filter(|s| matches!(s, Segment::Hole(h) if h == r))
                .count();
            if n != 1 {
                return Err(err(format!("placeholder {{{r}}} must appear exactly once, found {n}")));
            }
        }
        Ok(Self {
            source: source.to_string(),
            segments,
        })
    }

    /// Single-pass substitution, so values containing `{...}` stay literal.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Hole(h) => {
                    let v = values
                        .iter()
                        .find(|(k, _)| k == h)
                        .map(|(_, v)| *v)
                        .expect("placeholders validated at parse time");
                    out.push_str(v);
                }
            }
        }
        out
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// The prompt strings, validated at load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub system: Option<String>,
    pub zero_shot: Template,
    pub clue_suffix: Template,
    pub exemplar_user: Template,
    pub exemplar_assistant: Template,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    system: Option<String>,
    zero_shot: String,
    clue_suffix: String,
    exemplar_user: String,
    exemplar_assistant: String,
}

impl TemplateSet {
    /// Parses the TOML key/string map.
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let f: TemplateFile = toml::from_str(text)?;
        Self::from_map(
            f.system,
            &BTreeMap::from([
                ("zero_shot", f.zero_shot),
                ("clue_suffix", f.clue_suffix),
                ("exemplar_user", f.exemplar_user),
                ("exemplar_assistant", f.exemplar_assistant),
            ]),
        )
    }

    fn from_map(system: Option<String>, m: &BTreeMap<&str, String>) -> Result<Self, PromptError> {
        Ok(Self {
            system: system.filter(|s| !s.trim().is_empty()),
            zero_shot: Template::parse("zero_shot", &m["zero_shot"], &["text"])?,
            clue_suffix: Template::parse("clue_suffix", &m["clue_suffix"], &["punchline", "original"])?,
            exemplar_user: Template::parse("exemplar_user", &m["exemplar_user"], &["text"])?,
            exemplar_assistant: Template::parse(
                "exemplar_assistant",
                &m["exemplar_assistant"],
                &["explanation"],
            )?,
        })
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

/// Assembles the message list for `mode`.
///
/// Zero-shot: optional system message, then the zero-shot template.
/// Five-shot: the first five exemplars as user/assistant pairs before the
/// query. Clue-provided: the zero-shot query followed by the clue suffix on
/// a new line, in the same user message.
pub fn build_prompt(
    mode: PromptMode,
    text: &str,
    clue: Option<&Clue>,
    exemplars: Option<&ExemplarSet>,
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    let mut messages = Vec::new();
    if let Some(system) = &templates.system {
        messages.push(Message::new(Role::System, system.clone()));
    }
    let query = templates.zero_shot.render(&[("text", text)]);
    let mut provenance = None;
    match mode {
        PromptMode::ZeroShot => messages.push(Message::new(Role::User, query)),
        PromptMode::FiveShot => {
            let set = exemplars.ok_or(PromptError::NotEnoughExemplars { got: 0 })?;
            if set.len() < FIVE_SHOT {
                return Err(PromptError::NotEnoughExemplars { got: set.len() });
            }
            for ex in &set.0[..FIVE_SHOT] {
                messages.push(Message::new(
                    Role::User,
                    templates.exemplar_user.render(&[("text", &ex.text)]),
                ));
                messages.push(Message::new(
                    Role::Assistant,
                    templates
                        .exemplar_assistant
                        .render(&[("explanation", &ex.explanation)]),
                ));
            }
            messages.push(Message::new(Role::User, query));
        }
        PromptMode::ClueProvided => {
            let clue = clue.ok_or(PromptError::MissingClue { mode })?;
            let suffix = templates.clue_suffix.render(&[
                ("punchline", &clue.punchline),
                ("original", &clue.original),
            ]);
            messages.push(Message::new(Role::User, format!("{query}\n{suffix}")));
            provenance = Some(clue.clone());
        }
    }
    Ok(PromptBundle {
        mode,
        messages,
        provenance,
    })
}
