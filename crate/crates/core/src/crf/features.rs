//! Feature templates standing in for a neural encoder.
//!
//! | prefix | meaning                                            |
//! |--------|----------------------------------------------------|
//! | U00-U04| character at offset -2..+2                         |
//! | B00    | bigram (-1, 0)                                     |
//! | B01    | bigram (0, +1)                                     |
//! | P00    | initial of the top reading (`NONPY` off-lexicon)   |
//! | P01    | final of the top reading (`NONPY` off-lexicon)     |
//! | POLY   | `POLY=1` when the character has several readings   |
//! | BIAS   | always on                                          |

use crate::pinyin::PinyinLexicon;

/// Bumped whenever the template set changes; stored in model files.
pub const TEMPLATE_VERSION: &str = "char5-bigram-pinyin-v1";

/// Active feature names at one position.
pub type FeatureVector = Vec<String>;

fn token(sentence: &[char], index: isize) -> String {
    let n = sentence.len() as isize;
    if index < 0 {
        format!("<S{index}>")
    } else if index >= n {
        format!("<E+{}>", index - n + 1)
    } else {
        sentence[index as usize].to_string()
    }
}

pub fn featurize(sentence: &[char], lexicon: &PinyinLexicon) -> Vec<FeatureVector> {
    (0..sentence.len())
        .map(|pos| {
            let p = pos as isize;
            let mut feats = Vec::with_capacity(12);
            for (slot, off) in (-2..=2).enumerate() {
                feats.push(format!("U0{slot}={}", token(sentence, p + off)));
            }
            feats.push(format!("B00={}{}", token(sentence, p - 1), token(sentence, p)));
            feats.push(format!("B01={}{}", token(sentence, p), token(sentence, p + 1)));
            match lexicon.top_reading(sentence[pos]) {
                Some(s) => {
                    let initial = if s.initial.is_empty() { "0" } else { s.initial };
                    feats.push(format!("P00={initial}"));
                    feats.push(format!("P01={}", s.rime));
                    let n = lexicon.readings(sentence[pos]).map_or(0, <[_]>::len);
                    feats.push(format!("POLY={}", u8::from(n > 1)));
                }
                None => {
                    feats.push("P00=NONPY".to_string());
                    feats.push("P01=NONPY".to_string());
                }
            }
            feats.push("BIAS".to_string());
            feats
        })
        .collect()
}
