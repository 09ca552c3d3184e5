//! Span metrics (EMA, SMA, entity P/R/F1), the PER benchmark runner, human
//! score aggregation and report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Span};
use crate::crf::{predict_spans, CrfModel};
use crate::pinyin::PinyinLexicon;

/// Minimum character Jaccard for a similar match.
pub const SMA_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("instance {index}: prediction id {predicted:?} does not match gold id {gold:?}")]
    IdMismatch {
        index: usize,
        predicted: String,
        gold: String,
    },
    #[error("{predicted} predictions for {gold} gold instances")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("score record {index} (rater {rater_id:?}, instance {instance_id:?}): score {score} outside [0,100]")]
    ScoreOutOfRange {
        index: usize,
        rater_id: String,
        instance_id: String,
        score: f64,
    },
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
    pub n_instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ema: f64,
    pub sma: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub id: String,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub id: String,
    pub span: Span,
}

/// Character-index Jaccard of two half-open spans.
pub fn jaccard(a: Span, b: Span) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// EMA compares the first predicted span with the gold offsets; SMA takes
/// the best Jaccard over all predicted spans; P/R/F1 count exact-boundary
/// entity matches, at most one per gold span.
pub fn span_metrics(predictions: &[SpanPrediction], golds: &[GoldSpan]) -> Result<MetricsReport, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predictions.len(),
            gold: golds.len(),
        });
    }
    let mut exact = 0;
    let mut similar = 0;
    let mut counts = Counts {
        n_instances: golds.len(),
        gold: golds.len(),
        ..Counts::default()
    };
    for (index, (p, g)) in predictions.iter().zip(golds).enumerate() {
        if p.id != g.id {
            return Err(EvalError::IdMismatch {
                index,
                predicted: p.id.clone(),
                gold: g.id.clone(),
            });
        }
        if p.spans.first() == Some(&g.span) {
            exact += 1;
        }
        if p.spans.iter().any(|&s| jaccard(s, g.span) >= SMA_THRESHOLD) {
            similar += 1;
        }
        counts.predicted += p.spans.len();
        if p.spans.contains(&g.span) {
            counts.true_positives += 1;
        }
    }
    let precision = ratio(counts.true_positives, counts.predicted);
    let recall = ratio(counts.true_positives, counts.gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        ema: ratio(exact, counts.n_instances),
        sma: ratio(similar, counts.n_instances),
        precision,
        recall,
        f1,
        counts,
    })
}

#[derive(Debug, Serialize)]
struct TraceLine<'a> {
    id: &'a str,
    text: &'a str,
    gold: Span,
    predicted: &'a [Span],
    exact: bool,
}

/// Tags every instance and scores the predictions. When `trace` is given,
/// one JSON line per instance is written to it.
pub fn run_per_benchmark(
    model: &CrfModel,
    dataset: &Corpus,
    lexicon: &PinyinLexicon,
    mut trace: Option<&mut dyn Write>,
) -> Result<MetricsReport, EvalError> {
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut golds = Vec::with_capacity(dataset.len());
    for inst in &dataset.instances {
        let spans = predict_spans(model, &inst.text, lexicon);
        if let Some(out) = trace.as_deref_mut() {
            let line = TraceLine {
                id: &inst.id,
                text: &inst.text,
                gold: inst.punchline,
                predicted: &spans,
                exact: spans.first() == Some(&inst.punchline),
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
        predictions.push(SpanPrediction {
            id: inst.id.clone(),
            spans,
        });
        golds.push(GoldSpan {
            id: inst.id.clone(),
            span: inst.punchline,
        });
    }
    span_metrics(&predictions, &golds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    ZeroShot,
    ClueProvided,
    FiveShot,
}

impl Approach {
    pub fn as_str(self) -> &'static str {
        match self {
            Approach::ZeroShot => "zero_shot",
            Approach::ClueProvided => "clue_provided",
            Approach::FiveShot => "five_shot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub rater_id: String,
    pub instance_id: String,
    pub approach: Approach,
    pub score: f64,
}

/// Reads `rater_id,instance_id,approach,score` rows with a header line.
pub fn read_score_records<R: Read>(input: R) -> Result<Vec<ScoreRecord>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub count: usize,
}

/// Mean score per approach. Every record is range-checked first.
pub fn aggregate_scores(records: &[ScoreRecord]) -> Result<BTreeMap<Approach, ScoreSummary>, EvalError> {
    for (index, r) in records.iter().enumerate() {
        if !(0.0..=100.0).contains(&r.score) {
            return Err(EvalError::ScoreOutOfRange {
                index,
                rater_id: r.rater_id.clone(),
                instance_id: r.instance_id.clone(),
                score: r.score,
            });
        }
    }
    let mut sums: BTreeMap<Approach, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.approach).or_default();
        e.0 += r.score;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(a, (sum, count))| {
            (
                a,
                ScoreSummary {
                    mean: sum / count as f64,
                    count,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportValue {
    Metrics(MetricsReport),
    Score(f64),
}

/// Markdown table. Metric rows print EMA, SMA, P, R, F1 to two decimals;
/// score rows print one value to one decimal.
pub fn render_report(rows: &[(String, ReportValue)]) -> String {
    let mut out = String::from("Model | EMA | SMA | P | R | F1\n--- | --- | --- | --- | --- | ---\n");
    for (label, value) in rows {
        match value {
            ReportValue::Metrics(m) => {
                let _ = writeln!(
                    out,
                    "{label} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2}",
                    m.ema, m.sma, m.precision, m.recall, m.f1
                );
            }
            ReportValue::Score(s) => {
                let _ = writeln!(out, "{label} | {s:.1}");
            }
        }
    }
    out
}

/// Per-approach means as report rows, in `zero_shot, clue_provided,
/// five_shot` order.
pub fn score_rows(summary: &BTreeMap<Approach, ScoreSummary>) -> Vec<(String, ReportValue)> {
    summary
        .iter()
        .map(|(a, s)| (a.as_str().to_string(), ReportValue::Score(s.mean)))
        .collect()
}
