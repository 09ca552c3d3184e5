//! Punchline entity recognition: single-type BIO tagging with a linear-chain
//! CRF over hand-built character and pinyin features.

mod features;
pub mod inference;
mod model;
mod train;

use std::fmt;
use std::ops::Deref;

use thiserror::Error;

pub use features::{featurize, FeatureVector, TEMPLATE_VERSION};
pub use model::{CrfModel, EmissionScorer, FeatureTable, TrainedOn};
pub use train::{
    encode_corpus, nll_and_gradient, train, train_with_report, EncodedSequence, Gradient,
    TrainConfig, TrainReport,
};

use crate::corpus::Span;
use crate::pinyin::PinyinLexicon;

pub const NUM_LABELS: usize = 3;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model template version {found:?} does not match {expected:?}")]
    TemplateVersion { found: String, expected: String },
    #[error("invalid model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// BIO label. The discriminant is the label index used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    B = 0,
    I = 1,
    O = 2,
}

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [Label::B, Label::I, Label::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        Self::ALL[i]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::B => "B",
            Label::I => "I",
            Label::O => "O",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSequence(pub Vec<Label>);

impl TagSequence {
    /// Gold tags for a sentence of `len` characters with one punchline.
    pub fn from_span(len: usize, span: Span) -> Self {
        TagSequence(
            (0..len)
                .map(|i| {
                    if i == span.start {
                        Label::B
                    } else if i > span.start && i < span.end {
                        Label::I
                    } else {
                        Label::O
                    }
                })
                .collect(),
        )
    }

    /// Maximal B/I runs as spans. An I that does not continue a span opens a
    /// new one.
    pub fn spans(&self) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut open: Option<usize> = None;
        for (i, label) in self.0.iter().enumerate() {
            match label {
                Label::B => {
                    if let Some(start) = open.take() {
                        spans.push(Span::new(start, i));
                    }
                    open = Some(i);
                }
                Label::I => {
                    if open.is_none() {
                        open = Some(i);
                    }
                }
                Label::O => {
                    if let Some(start) = open.take() {
                        spans.push(Span::new(start, i));
                    }
                }
            }
        }
        if let Some(start) = open {
            spans.push(Span::new(start, self.0.len()));
        }
        spans
    }
}

impl Deref for TagSequence {
    type Target = [Label];

    fn deref(&self) -> &[Label] {
        &self.0
    }
}

impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

pub fn forward_log_partition(model: &CrfModel, features: &[FeatureVector]) -> f64 {
    inference::log_partition(&model.emissions_for(features), &model.transition)
}

pub fn viterbi_decode(model: &CrfModel, features: &[FeatureVector]) -> TagSequence {
    let (path, _) = inference::viterbi(&model.emissions_for(features), &model.transition);
    TagSequence(path.into_iter().map(Label::from_index).collect())
}

/// Template-feature emissions for a model and lexicon.
pub struct TemplateScorer<'a> {
    pub model: &'a CrfModel,
    pub lexicon: &'a PinyinLexicon,
}

impl EmissionScorer for TemplateScorer<'_> {
    fn emissions(&self, sentence: &[char]) -> Vec<[f64; NUM_LABELS]> {
        self.model.emissions_for(&featurize(sentence, self.lexicon))
    }
}

/// Decodes with any emission scorer and the given transitions.
pub fn tag_with<S: EmissionScorer + ?Sized>(
    scorer: &S,
    transitions: &inference::Transitions,
    sentence: &[char],
) -> TagSequence {
    if sentence.is_empty() {
        return TagSequence(Vec::new());
    }
    let (path, _) = inference::viterbi(&scorer.emissions(sentence), transitions);
    TagSequence(path.into_iter().map(Label::from_index).collect())
}

pub fn tag_text(model: &CrfModel, text: &str, lexicon: &PinyinLexicon) -> TagSequence {
    let chars: Vec<char> = text.chars().collect();
    tag_with(&TemplateScorer { model, lexicon }, &model.transition, &chars)
}

/// Punchline spans predicted for `text`, in text order.
pub fn predict_spans(model: &CrfModel, text: &str, lexicon: &PinyinLexicon) -> Vec<Span> {
    tag_text(model, text, lexicon).spans()
}
