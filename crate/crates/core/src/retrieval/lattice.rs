use serde::Serialize;

use super::RetrievalError;
use crate::pinyin::{syllable_distance, FuzzyCostTable, PinyinLexicon, Syllable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeArc {
    pub hanzi: char,
    /// The character's reading closest to the observed syllable.
    pub reading: Syllable,
    pub distance: f64,
}

/// Candidate characters per observed syllable, each position sorted by code
/// point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lattice {
    pub positions: Vec<Vec<LatticeArc>>,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of distinct paths, saturating.
    pub fn path_count(&self) -> usize {
        self.positions
            .iter()
            .fold(1usize, |acc, p| acc.saturating_mul(p.len()))
    }
}

/// Every lexicon character whose closest reading lies within `tau` of the
/// observed syllable, at every position.
pub fn build_lattice(
    syllables: &[Syllable],
    lexicon: &PinyinLexicon,
    costs: &FuzzyCostTable,
    tau: f64,
) -> Result<Lattice, RetrievalError> {
    if syllables.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(RetrievalError::InvalidParameter(format!("tau must be non-negative, got {tau}")));
    }
    let mut positions = Vec::with_capacity(syllables.len());
    for (position, observed) in syllables.iter().enumerate() {
        let mut arcs = Vec::new();
        for (hanzi, readings) in lexicon.iter() {
            let mut best: Option<(Syllable, f64)> = None;
            for r in readings {
                let d = syllable_distance(observed, &r.syllable, costs);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((r.syllable, d));
                }
            }
            if let Some((reading, distance)) = best {
                if distance <= tau {
                    arcs.push(LatticeArc {
                        hanzi,
                        reading,
                        distance,
                    });
                }
            }
        }
        if arcs.is_empty() {
            return Err(RetrievalError::EmptyPosition { position });
        }
        positions.push(arcs);
    }
    Ok(Lattice { positions })
}
