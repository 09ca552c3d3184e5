use std::cmp::Ordering;

use serde::Serialize;

use super::lattice::Lattice;
use super::lm::{BigramLm, Token};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginalCandidate {
    pub hanzi: String,
    /// `lm_logprob - beta * phonetic_distance`
    pub total_score: f64,
    pub lm_logprob: f64,
    pub phonetic_distance: f64,
}

#[derive(Debug, Clone)]
struct Hyp {
    total: f64,
    lm: f64,
    dist: f64,
    /// Arc index per position; arcs are in code-point order, so comparing
    /// these vectors compares the hanzi strings.
    path: Vec<u32>,
}

/// Higher score first, then the smaller hanzi string.
fn rank(a: &Hyp, b: &Hyp) -> Ordering {
    b.total
        .partial_cmp(&a.total)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.path.cmp(&b.path))
}

/// Keeps `beam` sorted by `rank` and at most `k` long.
fn offer(beam: &mut Vec<Hyp>, k: usize, total: f64, lm: f64, dist: f64, prefix: &[u32], last: u32) {
    let beats = |h: &Hyp| {
        total > h.total
            || (total == h.total && prefix.iter().copied().chain([last]).lt(h.path.iter().copied()))
    };
    if beam.len() == k && !beam.last().is_some_and(beats) {
        return;
    }
    let pos = beam.iter().position(beats).unwrap_or(beam.len());
    let mut path = Vec::with_capacity(prefix.len() + 1);
    path.extend_from_slice(prefix);
    path.push(last);
    beam.insert(pos, Hyp { total, lm, dist, path });
    beam.truncate(k);
}

/// The `k` best paths through the lattice under
/// `Σ log P(c_i | c_{i-1}) + log P(EOS | c_n) - beta · Σ d_i`.
///
/// Each lattice node keeps its own k best prefixes, which is exact because
/// every extension adds the same increment to all prefixes ending at a node.
pub fn decode_topk(lattice: &Lattice, lm: &BigramLm, beta: f64, k: usize) -> Vec<OriginalCandidate> {
    if lattice.is_empty() || k == 0 {
        return Vec::new();
    }
    let first = &lattice.positions[0];
    let mut beams: Vec<Vec<Hyp>> = first
        .iter()
        .enumerate()
        .map(|(j, arc)| {
            let lm_lp = lm.log_prob(Token::Bos, Token::Char(arc.hanzi));
            vec![Hyp {
                total: lm_lp - beta * arc.distance,
                lm: lm_lp,
                dist: arc.distance,
                path: vec![j as u32],
            }]
        })
        .collect();

    for i in 1..lattice.len() {
        let prev_arcs = &lattice.positions[i - 1];
        let arcs = &lattice.positions[i];
        let mut next: Vec<Vec<Hyp>> = Vec::with_capacity(arcs.len());
        for (j, arc) in arcs.iter().enumerate() {
            let mut beam: Vec<Hyp> = Vec::with_capacity(k + 1);
            for (p, prev_arc) in prev_arcs.iter().enumerate() {
                let step = lm.log_prob(Token::Char(prev_arc.hanzi), Token::Char(arc.hanzi));
                for h in &beams[p] {
                    let lm_lp = h.lm + step;
                    let dist = h.dist + arc.distance;
                    offer(&mut beam, k, lm_lp - beta * dist, lm_lp, dist, &h.path, j as u32);
                }
            }
            next.push(beam);
        }
        beams = next;
    }

    let last_arcs = &lattice.positions[lattice.len() - 1];
    let mut finals: Vec<Hyp> = Vec::new();
    for (j, beam) in beams.into_iter().enumerate() {
        let eos = lm.log_prob(Token::Char(last_arcs[j].hanzi), Token::Eos);
        for mut h in beam {
            h.lm += eos;
            h.total = h.lm - beta * h.dist;
            finals.push(h);
        }
    }
    finals.sort_by(rank);
    finals.truncate(k);
    finals
        .into_iter()
        .map(|h| OriginalCandidate {
            hanzi: h
                .path
                .iter()
                .enumerate()
                .map(|(i, &j)| lattice.positions[i][j as usize].hanzi)
                .collect(),
            total_score: h.total,
            lm_logprob: h.lm,
            phonetic_distance: h.dist,
        })
        .collect()
}
