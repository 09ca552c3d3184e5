//! Homophonic pun understanding for Chinese internet slang: punchline span
//! tagging with a linear-chain CRF, recovery of the original phrase by
//! fuzzy-pinyin lattice decoding, prompt assembly and evaluation metrics.

pub mod corpus;
pub mod crf;
pub mod eval;
pub mod pinyin;
pub mod prompt;
pub mod retrieval;

pub use corpus::{Corpus, PunInstance, Span};
pub use crf::{predict_spans, CrfModel, TagSequence, TrainConfig};
pub use eval::{span_metrics, MetricsReport};
pub use pinyin::{FuzzyCostTable, PinyinLexicon, Syllable};
pub use prompt::{build_prompt, Clue, PromptBundle, PromptMode, TemplateSet};
pub use retrieval::{retrieve_original, BigramLm, OriginalCandidate, RetrievalConfig};

/// The small corpora shipped with the crate.
pub mod fixtures {
    use crate::corpus::{generate_synthetic, parse_pairs, parse_templates, Corpus};
    use crate::prompt::ExemplarSet;

    /// Seed of the reference synthetic corpus.
    pub const SEED: u64 = 42;
    /// Templates and pairs used for training; the rest are held out.
    pub const TRAIN_TEMPLATES: usize = 8;
    pub const TRAIN_PAIRS: usize = 12;

    pub const PAIRS_TSV: &str = include_str!("../data/fixtures/pairs.tsv");
    pub const TEMPLATES_TXT: &str = include_str!("../data/fixtures/templates.txt");
    pub const DISTRACTORS_TXT: &str = include_str!("../data/fixtures/distractors.txt");
    pub const EXEMPLARS_JSONL: &str = include_str!("../data/fixtures/exemplars.jsonl");
    pub const REFERENCE_SCORES_CSV: &str = include_str!("../data/fixtures/reference_scores.csv");

    /// The 24 (pun, original) pairs.
    pub fn pairs() -> Vec<(String, String)> {
        parse_pairs(PAIRS_TSV).expect("bundled pairs are valid")
    }

    pub fn templates() -> Vec<String> {
        parse_templates(TEMPLATES_TXT)
    }

    pub fn distractors() -> Vec<String> {
        parse_templates(DISTRACTORS_TXT)
    }

    pub fn exemplars() -> ExemplarSet {
        ExemplarSet::from_jsonl(EXEMPLARS_JSONL.as_bytes()).expect("bundled exemplars are valid")
    }

    /// LM training text: every fixture original followed by the distractor
    /// sentences.
    pub fn lm_corpus() -> Vec<String> {
        pairs()
            .into_iter()
            .map(|(_, original)| original)
            .chain(distractors())
            .collect()
    }

    /// 8 templates x 12 pairs.
    pub fn training_corpus() -> Corpus {
        generate_synthetic(&templates()[..TRAIN_TEMPLATES], &pairs()[..TRAIN_PAIRS], SEED)
            .expect("bundled fixtures are valid")
    }

    /// The remaining templates crossed with the training pairs: unseen
    /// contexts around known punchlines.
    pub fn held_out_corpus() -> Corpus {
        generate_synthetic(&templates()[TRAIN_TEMPLATES..], &pairs()[..TRAIN_PAIRS], SEED)
            .expect("bundled fixtures are valid")
    }

    /// The training templates crossed with pairs never seen in training.
    pub fn unseen_pun_corpus() -> Corpus {
        generate_synthetic(&templates()[..TRAIN_TEMPLATES], &pairs()[TRAIN_PAIRS..], SEED)
            .expect("bundled fixtures are valid")
    }
}
