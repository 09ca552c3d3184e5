//! Recovering the original phrase behind a punchline: phoneticize, build a
//! lattice of phonetically close characters, decode it against a bigram LM.

mod decode;
mod expand;
mod lattice;
mod lm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decode::{decode_topk, OriginalCandidate};
pub use expand::fuzzy_expand;
pub use lattice::{build_lattice, Lattice, LatticeArc};
pub use lm::{train_bigram_lm, BigramLm, Token};

use crate::pinyin::{is_hanzi, FuzzyCostTable, PinyinLexicon};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("language model corpus is empty")]
    EmptyCorpus,
    #[error("nothing to decode")]
    EmptyInput,
    #[error("no lexicon character within tau of the syllable at position {position}")]
    EmptyPosition { position: usize },
    #[error("character {ch:?} at index {index} is not hanzi")]
    NotHanzi { index: usize, ch: char },
    #[error("character {ch:?} at index {index} is not in the lexicon")]
    OutOfLexicon { index: usize, ch: char },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: invalid language model file: {reason}")]
    LmFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Lattice inclusion threshold on the fuzzy distance.
    pub tau: f64,
    /// Weight of the phonetic distance against the LM log-probability.
    pub beta: f64,
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            tau: 1.3,
            beta: 2.0,
            k: 5,
        }
    }
}

/// Top-k original-phrase candidates for a punchline. The observation is each
/// character's top-weight reading; the punchline itself stays in the lattice
/// at distance zero and can win.
pub fn retrieve_original(
    punchline: &str,
    lexicon: &PinyinLexicon,
    lm: &BigramLm,
    costs: &FuzzyCostTable,
    config: &RetrievalConfig,
) -> Result<Vec<OriginalCandidate>, RetrievalError> {
    if punchline.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let observed = punchline
        .chars()
        .enumerate()
        .map(|(index, ch)| {
            if !is_hanzi(ch) {
                return Err(RetrievalError::NotHanzi { index, ch });
            }
            lexicon
                .top_reading(ch)
                .ok_or(RetrievalError::OutOfLexicon { index, ch })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lattice = build_lattice(&observed, lexicon, costs, config.tau)?;
    Ok(decode_topk(&lattice, lm, config.beta, config.k))
}
