//! Brute-force reference implementations shared by the integration tests and
//! the acceptance suite. Everything here enumerates; nothing is clever.
#![allow(dead_code)]

use duanzai_core::crf::{nll_and_gradient, CrfModel, FeatureTable, FeatureVector, Label, TagSequence, NUM_LABELS};
use duanzai_core::pinyin::{syllable_distance, FuzzyCostTable, Syllable};
use duanzai_core::retrieval::{BigramLm, Lattice, Token};
use rand::Rng;

/// Every label sequence of length `n`, in lexicographic order.
pub fn all_paths(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..NUM_LABELS).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn score_path(emissions: &[[f64; NUM_LABELS]], transitions: &[[f64; NUM_LABELS]; NUM_LABELS], path: &[usize]) -> f64 {
    let mut s = 0.0;
    for (t, &y) in path.iter().enumerate() {
        s += emissions[t][y];
        if t > 0 {
            s += transitions[path[t - 1]][y];
        }
    }
    s
}

pub fn brute_log_partition(emissions: &[[f64; NUM_LABELS]], transitions: &[[f64; NUM_LABELS]; NUM_LABELS]) -> f64 {
    let scores: Vec<f64> = all_paths(emissions.len())
        .iter()
        .map(|p| score_path(emissions, transitions, p))
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

pub fn brute_max(emissions: &[[f64; NUM_LABELS]], transitions: &[[f64; NUM_LABELS]; NUM_LABELS]) -> f64 {
    all_paths(emissions.len())
        .iter()
        .map(|p| score_path(emissions, transitions, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A model over features `f0..f{n_features}` with N(0,1)-ish weights, and
/// one sentence of `len` positions with 1 to 4 active features each.
pub fn random_instance<R: Rng>(rng: &mut R, len: usize, n_features: usize) -> (CrfModel, Vec<FeatureVector>, TagSequence) {
    let table: FeatureTable = (0..n_features).map(|i| format!("f{i}")).collect();
    let mut model = CrfModel::zeros(table);
    let w: Vec<f64> = (0..model.num_weights()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    model.set_weights(&w);
    let feats = (0..len)
        .map(|_| {
            let k = rng.gen_range(1..=4.min(n_features));
            (0..k).map(|_| format!("f{}", rng.gen_range(0..n_features))).collect()
        })
        .collect();
    let tags = TagSequence((0..len).map(|_| Label::from_index(rng.gen_range(0..NUM_LABELS))).collect());
    (model, feats, tags)
}

/// Max relative error between the analytic gradient and central differences
/// over every weight. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(model: &CrfModel, batch: &[(Vec<FeatureVector>, TagSequence)], l2: f64, eps: f64, floor: f64) -> f64 {
    let (_, grad) = nll_and_gradient(model, batch, l2);
    let analytic = grad.flatten();
    let w0 = model.weights();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..w0.len() {
        let mut w = w0.clone();
        w[i] = w0[i] + eps;
        probe.set_weights(&w);
        let plus = nll_and_gradient(&probe, batch, l2).0;
        w[i] = w0[i] - eps;
        probe.set_weights(&w);
        let minus = nll_and_gradient(&probe, batch, l2).0;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

/// Minimum-cost alignment by exhaustive recursion over edit choices.
pub fn brute_sequence_distance(a: &[Syllable], b: &[Syllable], costs: &FuzzyCostTable) -> f64 {
    match (a.split_first(), b.split_first()) {
        (None, None) => 0.0,
        (Some((_, ra)), None) => costs.indel_cost + brute_sequence_distance(ra, b, costs),
        (None, Some((_, rb))) => costs.indel_cost + brute_sequence_distance(a, rb, costs),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = syllable_distance(x, y, costs) + brute_sequence_distance(ra, rb, costs);
            let del = costs.indel_cost + brute_sequence_distance(ra, b, costs);
            let ins = costs.indel_cost + brute_sequence_distance(a, rb, costs);
            sub.min(del).min(ins)
        }
    }
}

/// Every path through the lattice with its total score, best first, ties by
/// string.
pub fn enumerate_lattice(lattice: &Lattice, lm: &BigramLm, beta: f64) -> Vec<(String, f64)> {
    let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
    for arcs in &lattice.positions {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..arcs.len()).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    let mut out: Vec<(String, f64)> = paths
        .iter()
        .map(|p| {
            let chars: Vec<char> = p.iter().enumerate().map(|(i, &j)| lattice.positions[i][j].hanzi).collect();
            let dist: f64 = p.iter().enumerate().map(|(i, &j)| lattice.positions[i][j].distance).sum();
            (chars.iter().collect(), path_lm(lm, &chars) - beta * dist)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// `log P(c1|BOS) + Σ log P(c_i|c_{i-1}) + log P(EOS|c_n)`.
pub fn path_lm(lm: &BigramLm, chars: &[char]) -> f64 {
    let mut prev = Token::Bos;
    let mut s = 0.0;
    for &c in chars {
        s += lm.log_prob(prev, Token::Char(c));
        prev = Token::Char(c);
    }
    s + lm.log_prob(prev, Token::Eos)
}
