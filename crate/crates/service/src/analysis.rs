use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use duanzai_core::crf::{predict_spans, train, CrfModel};
use duanzai_core::pinyin::{load_lexicon, FuzzyCostTable, PinyinLexicon};
use duanzai_core::prompt::TemplateSet;
use duanzai_core::retrieval::{retrieve_original, train_bigram_lm, BigramLm, OriginalCandidate, RetrievalConfig};
use duanzai_core::{fixtures, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::ModelPaths;
use crate::ServiceError;

/// Punchlines longer than this are reported but not decoded.
pub const MAX_RETRIEVAL_CHARS: usize = 12;

/// Immutable models shared by every request.
#[derive(Debug, Clone)]
pub struct Resources {
    pub model: CrfModel,
    pub lexicon: PinyinLexicon,
    pub lm: BigramLm,
    pub costs: FuzzyCostTable,
    pub retrieval: RetrievalConfig,
    pub templates: TemplateSet,
}

fn open(path: &Path) -> Result<BufReader<File>, ServiceError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| ServiceError::Resource(format!("{}: {e}", path.display())))
}

fn load_err(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Resource(format!("{}: {e}", path.display()))
}

impl Resources {
    /// Everything from the bundled fixture: the CRF trained on the reference
    /// synthetic corpus and the LM over the fixture text.
    pub fn fixture() -> Self {
        let lexicon = PinyinLexicon::bundled().clone();
        let config = TrainConfig {
            seed: fixtures::SEED,
            ..TrainConfig::default()
        };
        let model = train(&fixtures::training_corpus(), &lexicon, &config).expect("fixture corpus trains");
        Self {
            model,
            lm: train_bigram_lm(&fixtures::lm_corpus(), 0.1).expect("fixture LM trains"),
            lexicon,
            costs: FuzzyCostTable::default(),
            retrieval: RetrievalConfig::default(),
            templates: TemplateSet::default(),
        }
    }

    /// Loads each configured file, falling back to the bundled resource for
    /// any path left unset. Any unreadable or invalid file is an error.
    pub fn load(paths: &ModelPaths, retrieval: RetrievalConfig) -> Result<Self, ServiceError> {
        let lexicon = match &paths.lexicon {
            Some(p) => load_lexicon(open(p)?).map_err(|e| load_err(p, e))?,
            None => PinyinLexicon::bundled().clone(),
        };
        let model = match &paths.crf_model {
            Some(p) => CrfModel::read_json(open(p)?).map_err(|e| load_err(p, e))?,
            None => {
                tracing::info!("no CRF model configured, training on the bundled fixture");
                let config = TrainConfig {
                    seed: fixtures::SEED,
                    ..TrainConfig::default()
                };
                train(&fixtures::training_corpus(), &lexicon, &config)
                    .map_err(|e| ServiceError::Resource(format!("fixture training: {e}")))?
            }
        };
        let lm = match &paths.lm {
            Some(p) => BigramLm::read(open(p)?).map_err(|e| load_err(p, e))?,
            None => train_bigram_lm(&fixtures::lm_corpus(), 0.1).expect("fixture LM trains"),
        };
        let templates = match &paths.templates {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| load_err(p, e))?;
                TemplateSet::from_toml(&text).map_err(|e| load_err(p, e))?
            }
            None => TemplateSet::default(),
        };
        Ok(Self {
            model,
            lexicon,
            lm,
            costs: FuzzyCostTable::default(),
            retrieval,
            templates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Punchline {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub punchline: Option<Punchline>,
    pub candidates: Vec<OriginalCandidate>,
    pub clue_used: bool,
}

impl Analysis {
    pub fn empty() -> Self {
        Self {
            punchline: None,
            candidates: Vec::new(),
            clue_used: false,
        }
    }

    /// The (punchline, best original) pair when both are present.
    pub fn clue(&self) -> Option<(&str, &str)> {
        match (&self.punchline, self.candidates.first()) {
            (Some(p), Some(c)) if self.clue_used => Some((p.surface.as_str(), c.hanzi.as_str())),
            _ => None,
        }
    }
}

/// Tags the text, then retrieves originals for the first punchline. Never
/// fails: retrieval problems leave the candidate list empty.
pub fn analyze(text: &str, resources: &Resources) -> Analysis {
    let Some(span) = predict_spans(&resources.model, text, &resources.lexicon).into_iter().next() else {
        return Analysis::empty();
    };
    let surface = span.slice(text);
    let candidates = if span.len() > MAX_RETRIEVAL_CHARS {
        tracing::warn!(len = span.len(), "punchline too long to decode, skipping retrieval");
        Vec::new()
    } else {
        retrieve_original(&surface, &resources.lexicon, &resources.lm, &resources.costs, &resources.retrieval)
            .unwrap_or_else(|e| {
                tracing::warn!(error = %e, surface = %surface, "retrieval failed, continuing without clue");
                Vec::new()
            })
    };
    let clue_used = !candidates.is_empty();
    Analysis {
        punchline: Some(Punchline {
            start: span.start,
            end: span.end,
            surface,
        }),
        candidates,
        clue_used,
    }
}
