//! Linear-chain CRF math over a dense emission matrix.
//!
//! A path score is the sum of per-position emission scores plus the sum of
//! transition scores between consecutive labels. There are no start or stop
//! transitions.

use super::NUM_LABELS;

pub type Emissions = [[f64; NUM_LABELS]];
pub type Transitions = [[f64; NUM_LABELS]; NUM_LABELS];

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward recursion; `alpha[t][y]` is the log-sum of all prefixes ending in `y`.
pub fn forward(emissions: &Emissions, transitions: &Transitions) -> Vec<[f64; NUM_LABELS]> {
    let mut alpha: Vec<[f64; NUM_LABELS]> = Vec::with_capacity(emissions.len());
    if emissions.is_empty() {
        return alpha;
    }
    alpha.push(emissions[0]);
    for t in 1..emissions.len() {
        let prev = alpha[t - 1];
        let mut cur = [0.0; NUM_LABELS];
        for y in 0..NUM_LABELS {
            let terms: [f64; NUM_LABELS] = std::array::from_fn(|p| prev[p] + transitions[p][y]);
            cur[y] = log_sum_exp(&terms) + emissions[t][y];
        }
        alpha.push(cur);
    }
    alpha
}

/// Backward recursion; `beta[t][y]` is the log-sum of all suffixes after `y` at `t`.
pub fn backward(emissions: &Emissions, transitions: &Transitions) -> Vec<[f64; NUM_LABELS]> {
    let n = emissions.len();
    let mut beta = vec![[0.0; NUM_LABELS]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        for y in 0..NUM_LABELS {
            let terms: [f64; NUM_LABELS] =
                std::array::from_fn(|q| transitions[y][q] + emissions[t + 1][q] + beta[t + 1][q]);
            beta[t][y] = log_sum_exp(&terms);
        }
    }
    beta
}

/// log Z. Negative infinity for an empty sequence is avoided by returning 0.
pub fn log_partition(emissions: &Emissions, transitions: &Transitions) -> f64 {
    match forward(emissions, transitions).last() {
        Some(last) => log_sum_exp(last),
        None => 0.0,
    }
}

pub fn path_score(emissions: &Emissions, transitions: &Transitions, labels: &[usize]) -> f64 {
    let mut score = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        score += emissions[t][y];
        if t > 0 {
            score += transitions[labels[t - 1]][y];
        }
    }
    score
}

/// Posterior marginals from forward-backward.
pub struct Marginals {
    pub log_z: f64,
    /// `node[t][y]` = P(y_t = y)
    pub node: Vec<[f64; NUM_LABELS]>,
    /// `edge[p][q]` = sum over t of P(y_{t-1} = p, y_t = q)
    pub edge: [[f64; NUM_LABELS]; NUM_LABELS],
}

pub fn marginals(emissions: &Emissions, transitions: &Transitions) -> Marginals {
    let alpha = forward(emissions, transitions);
    let beta = backward(emissions, transitions);
    let log_z = alpha.last().map_or(0.0, |a| log_sum_exp(a));
    let node = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| std::array::from_fn(|y| (a[y] + b[y] - log_z).exp()))
        .collect();
    let mut edge = [[0.0; NUM_LABELS]; NUM_LABELS];
    for t in 1..emissions.len() {
        for (p, row) in edge.iter_mut().enumerate() {
            for (q, cell) in row.iter_mut().enumerate() {
                *cell += (alpha[t - 1][p] + transitions[p][q] + emissions[t][q] + beta[t][q] - log_z)
                    .exp();
            }
        }
    }
    Marginals { log_z, node, edge }
}

/// MAP path and its score. On ties the lowest label index wins, both at each
/// backpointer and at the final position.
pub fn viterbi(emissions: &Emissions, transitions: &Transitions) -> (Vec<usize>, f64) {
    let n = emissions.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta = emissions[0];
    let mut back = vec![[0usize; NUM_LABELS]; n];
    for t in 1..n {
        let mut next = [0.0; NUM_LABELS];
        for y in 0..NUM_LABELS {
            let mut best = 0;
            let mut best_score = delta[0] + transitions[0][y];
            for p in 1..NUM_LABELS {
                let s = delta[p] + transitions[p][y];
                if s > best_score {
                    best = p;
                    best_score = s;
                }
            }
            back[t][y] = best;
            next[y] = best_score + emissions[t][y];
        }
        delta = next;
    }
    let mut last = 0;
    for y in 1..NUM_LABELS {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    let score = delta[last];
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path, score)
}
