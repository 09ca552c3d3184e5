//! Maximum-likelihood training: regularized negative log-likelihood, its
//! gradient via forward-backward, and an L-BFGS minimizer with a monotone
//! backtracking line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureVector};
use super::inference::{marginals, path_score};
use super::model::{CrfModel, FeatureTable, TrainedOn};
use super::{CrfError, TagSequence, NUM_LABELS};
use crate::corpus::Corpus;
use crate::pinyin::PinyinLexicon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub max_iterations: usize,
    /// Stop once the relative NLL change of an accepted step falls below this.
    pub convergence_tol: f64,
    /// Recorded in the model metadata. The batch optimizer itself draws no
    /// random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 0.1,
            max_iterations: 100,
            convergence_tol: 1e-5,
            seed: 0,
        }
    }
}

/// Same shape as the model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub emission: Vec<[f64; NUM_LABELS]>,
    pub transition: [[f64; NUM_LABELS]; NUM_LABELS],
}

impl Gradient {
    fn zeros(n_features: usize) -> Self {
        Self {
            emission: vec![[0.0; NUM_LABELS]; n_features],
            transition: [[0.0; NUM_LABELS]; NUM_LABELS],
        }
    }

    /// Flattened in the same order as [`CrfModel::weights`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.emission.iter().flatten().copied().collect();
        g.extend(self.transition.iter().flatten());
        g
    }
}

/// One training sequence with interned features.
#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub features: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

fn objective(model: &CrfModel, data: &[EncodedSequence], l2: f64) -> (f64, Gradient) {
    let mut loss = 0.0;
    let mut grad = Gradient::zeros(model.emission.len());
    for seq in data {
        let emissions = model.emissions_for_ids(&seq.features);
        let m = marginals(&emissions, &model.transition);
        loss += m.log_z - path_score(&emissions, &model.transition, &seq.labels);
        for (t, active) in seq.features.iter().enumerate() {
            let gold = seq.labels[t];
            for &f in active {
                let row = &mut grad.emission[f as usize];
                for (r, p) in row.iter_mut().zip(&m.node[t]) {
                    *r += p;
                }
                row[gold] -= 1.0;
            }
        }
        for p in 0..NUM_LABELS {
            for q in 0..NUM_LABELS {
                grad.transition[p][q] += m.edge[p][q];
            }
        }
        for w in seq.labels.windows(2) {
            grad.transition[w[0]][w[1]] -= 1.0;
        }
    }
    if l2 > 0.0 {
        let mut sq = 0.0;
        for (g, w) in grad.emission.iter_mut().zip(&model.emission) {
            for y in 0..NUM_LABELS {
                g[y] += l2 * w[y];
                sq += w[y] * w[y];
            }
        }
        for p in 0..NUM_LABELS {
            for q in 0..NUM_LABELS {
                let w = model.transition[p][q];
                grad.transition[p][q] += l2 * w;
                sq += w * w;
            }
        }
        loss += 0.5 * l2 * sq;
    }
    (loss, grad)
}

/// Σ (log Z − gold score) + λ/2·‖w‖² and its gradient. Features the model does
/// not know are ignored.
pub fn nll_and_gradient(
    model: &CrfModel,
    batch: &[(Vec<FeatureVector>, TagSequence)],
    l2_lambda: f64,
) -> (f64, Gradient) {
    let data: Vec<EncodedSequence> = batch
        .iter()
        .map(|(feats, tags)| {
            assert_eq!(feats.len(), tags.len(), "gold tags must match sentence length");
            EncodedSequence {
                features: model.features.lookup(feats),
                labels: tags.iter().map(|l| l.index()).collect(),
            }
        })
        .collect();
    objective(model, &data, l2_lambda)
}

/// Per-iteration record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Objective at the starting point, then after every accepted step.
    pub losses: Vec<f64>,
    pub converged: bool,
}

pub fn encode_corpus(
    corpus: &Corpus,
    lexicon: &PinyinLexicon,
) -> (FeatureTable, Vec<EncodedSequence>) {
    let mut table = FeatureTable::default();
    let data = corpus
        .instances
        .iter()
        .map(|inst| {
            let chars: Vec<char> = inst.text.chars().collect();
            let features = featurize(&chars, lexicon)
                .iter()
                .map(|fv| fv.iter().map(|f| table.intern(f)).collect())
                .collect();
            let labels = TagSequence::from_span(chars.len(), inst.punchline)
                .iter()
                .map(|l| l.index())
                .collect();
            EncodedSequence { features, labels }
        })
        .collect();
    (table, data)
}

pub fn train(
    corpus: &Corpus,
    lexicon: &PinyinLexicon,
    config: &TrainConfig,
) -> Result<CrfModel, CrfError> {
    train_with_report(corpus, lexicon, config).map(|(m, _)| m)
}

pub fn train_with_report(
    corpus: &Corpus,
    lexicon: &PinyinLexicon,
    config: &TrainConfig,
) -> Result<(CrfModel, TrainReport), CrfError> {
    if corpus.is_empty() {
        return Err(CrfError::EmptyCorpus);
    }
    if !(config.l2_lambda >= 0.0 && config.l2_lambda.is_finite()) {
        return Err(CrfError::Config("l2_lambda must be finite and non-negative".into()));
    }
    let (table, data) = encode_corpus(corpus, lexicon);
    let mut model = CrfModel::zeros(table);
    model.trained_on = Some(TrainedOn {
        corpus: corpus.info(),
        seed: config.seed,
    });

    let mut scratch = model.clone();
    let eval = |w: &[f64]| {
        scratch.set_weights(w);
        let (loss, grad) = objective(&scratch, &data, config.l2_lambda);
        (loss, grad.flatten())
    };
    let (w, report) = lbfgs(model.weights(), eval, config)?;
    model.set_weights(&w);
    Ok((model, report))
}

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lbfgs<F>(
    mut w: Vec<f64>,
    mut eval: F,
    config: &TrainConfig,
) -> Result<(Vec<f64>, TrainReport), CrfError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (mut f, mut g) = eval(&w);
    if !f.is_finite() {
        return Err(CrfError::NonFiniteLoss { iteration: 0 });
    }
    let mut losses = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < 1e-10 {
            converged = true;
            break;
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for di in &mut d {
                *di *= gamma;
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }

        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|x| -x).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if history.is_empty() { 1.0 / gnorm } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| wi + step * di).collect();
            let (fc, gc) = eval(&candidate);
            if fc.is_finite() && fc <= f + ARMIJO_C1 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, f_new, g_new)) = accepted else {
            // no decrease representable along this direction
            converged = true;
            break;
        };

        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let rel = (f - f_new).abs() / f.abs().max(1.0);
        tracing::debug!(iteration, loss = f_new, step, "lbfgs step accepted");
        w = w_new;
        f = f_new;
        g = g_new;
        losses.push(f);
        if rel < config.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok((w, TrainReport { losses, converged }))
}
