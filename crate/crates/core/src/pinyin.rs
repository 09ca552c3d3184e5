//! Pinyin syllables, the character lexicon and the fuzzy phonetic distance.
//!
//! A [`Syllable`] is the triple (initial, final, tone). Syllables are parsed by
//! greedy longest-initial match and validated against a [`SyllableInventory`].
//! Finals are kept in their written form (`ju` has final `u`, `lv` has final
//! `v`), which is also how the bundled lexicon spells them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pinyin initials, two-letter ones first so greedy matching works.
pub const INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r",
    "z", "c", "s", "y", "w",
];

/// Written pinyin finals (ü spelled `v`).
pub const FINALS: [&str; 35] = [
    "a", "o", "e", "i", "u", "v", "ai", "ei", "ui", "ao", "ou", "iu", "ie", "ve", "ue", "er", "an",
    "en", "in", "un", "vn", "ang", "eng", "ing", "ong", "ia", "iao", "ian", "iang", "iong", "ua",
    "uo", "uai", "uan", "uang",
];

const BUNDLED_INVENTORY: &str = include_str!("../data/syllables.txt");
const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Error)]
pub enum PinyinError {
    #[error("line {line}: malformed entry: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: invalid syllable {text:?}: {source}")]
    InvalidReading {
        line: usize,
        text: String,
        #[source]
        source: Box<PinyinError>,
    },
    #[error("line {line}: duplicate entry for {hanzi}")]
    DuplicateEntry { line: usize, hanzi: char },
    #[error("unknown syllable {0:?}")]
    UnknownSyllable(String),
    #[error("invalid tone digit in {0:?}")]
    InvalidTone(String),
    #[error("character {ch:?} at index {index} is not in the lexicon")]
    OutOfLexicon { index: usize, ch: char },
    #[error("invalid fuzzy cost table: {0}")]
    InvalidCosts(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// True for CJK unified ideographs (base block, extension A, compatibility
/// block and the supplementary ideographic planes).
pub fn is_hanzi(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x3134F)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Syllable {
    /// Empty for zero-initial syllables such as `a` or `er`.
    pub initial: &'static str,
    /// The pinyin final, in written form.
    pub rime: &'static str,
    /// 1-4, or 0 for the neutral tone.
    pub tone: u8,
}

impl Syllable {
    /// Toneless spelling, e.g. `zhang`.
    pub fn base(&self) -> String {
        format!("{}{}", self.initial, self.rime)
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tone == 0 {
            write!(f, "{}{}", self.initial, self.rime)
        } else {
            write!(f, "{}{}{}", self.initial, self.rime, self.tone)
        }
    }
}

impl Serialize for Syllable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

fn intern_initial(s: &str) -> Option<&'static str> {
    if s.is_empty() {
        return Some("");
    }
    INITIALS.iter().copied().find(|i| *i == s)
}

fn intern_final(s: &str) -> Option<&'static str> {
    FINALS.iter().copied().find(|f| *f == s)
}

/// The set of valid (initial, final) combinations.
#[derive(Debug, Clone, Default)]
pub struct SyllableInventory {
    pairs: HashSet<(&'static str, &'static str)>,
}

impl SyllableInventory {
    /// Parses the `initial,final` per-line format. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, PinyinError> {
        let mut pairs = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: &str| PinyinError::Malformed {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (ini, fin) = line
                .split_once(',')
                .ok_or_else(|| malformed("expected `initial,final`"))?;
            let ini = intern_initial(ini.trim()).ok_or_else(|| malformed("unknown initial"))?;
            let fin = intern_final(fin.trim()).ok_or_else(|| malformed("unknown final"))?;
            pairs.insert((ini, fin));
        }
        Ok(Self { pairs })
    }

    /// The inventory shipped with the crate.
    pub fn bundled() -> &'static SyllableInventory {
        static INVENTORY: OnceLock<SyllableInventory> = OnceLock::new();
        INVENTORY.get_or_init(|| {
            SyllableInventory::parse(BUNDLED_INVENTORY).expect("bundled syllable inventory is valid")
        })
    }

    pub fn contains(&self, initial: &str, rime: &str) -> bool {
        match (intern_initial(initial), intern_final(rime)) {
            (Some(i), Some(f)) => self.pairs.contains(&(i, f)),
            _ => false,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sorted (initial, final) pairs.
    pub fn pairs(&self) -> Vec<(&'static str, &'static str)> {
        let mut v: Vec<_> = self.pairs.iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Parses a romanized syllable such as `zhang1` or `a`.
    pub fn parse_syllable(&self, text: &str) -> Result<Syllable, PinyinError> {
        let unknown = || PinyinError::UnknownSyllable(text.to_string());
        let (body, tone) = match text.as_bytes().last() {
            None => return Err(unknown()),
            Some(b) if b.is_ascii_digit() => {
                let tone = b - b'0';
                if tone > 4 {
                    return Err(PinyinError::InvalidTone(text.to_string()));
                }
                (&text[..text.len() - 1], tone)
            }
            Some(_) => (text, 0),
        };
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(unknown());
        }
        let initial = INITIALS
            .iter()
            .copied()
            .find(|i| body.starts_with(i))
            .unwrap_or("");
        let rime = intern_final(&body[initial.len()..]).ok_or_else(unknown)?;
        if !self.pairs.contains(&(initial, rime)) {
            return Err(unknown());
        }
        Ok(Syllable {
            initial,
            rime,
            tone,
        })
    }
}

/// Parses a syllable against the bundled inventory.
pub fn parse_syllable(text: &str) -> Result<Syllable, PinyinError> {
    SyllableInventory::bundled().parse_syllable(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reading {
    pub syllable: Syllable,
    pub weight: f64,
}

/// Character to weighted readings. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct PinyinLexicon {
    readings: BTreeMap<char, Vec<Reading>>,
    inventory: SyllableInventory,
}

impl PinyinLexicon {
    /// Loads the tab-separated lexicon format:
    /// `<hanzi>\t<syllable>[:weight](,<syllable>[:weight])*`.
    ///
    /// A reading without a weight gets `1/n` (n = readings on the line), then
    /// the line is normalized to sum to one.
    pub fn load<R: BufRead>(source: R, inventory: &SyllableInventory) -> Result<Self, PinyinError> {
        let mut readings = BTreeMap::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let malformed = |reason: &str| PinyinError::Malformed {
                line: lineno,
                reason: reason.to_string(),
            };
            let (hanzi, rest) = trimmed
                .split_once('\t')
                .ok_or_else(|| malformed("expected `<hanzi>\\t<readings>`"))?;
            let mut chars = hanzi.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(malformed("key must be a single character")),
            };
            let cells: Vec<&str> = rest.split(',').map(str::trim).collect();
            if cells.iter().any(|c| c.is_empty()) {
                return Err(malformed("empty reading"));
            }
            let uniform = 1.0 / cells.len() as f64;
            let mut entry = Vec::with_capacity(cells.len());
            for cell in cells {
                let (syl, weight) = match cell.split_once(':') {
                    Some((s, w)) => {
                        let w: f64 = w
                            .parse()
                            .map_err(|_| malformed("weight is not a number"))?;
                        if !w.is_finite() || w < 0.0 {
                            return Err(malformed("weight must be finite and non-negative"));
                        }
                        (s, w)
                    }
                    None => (cell, uniform),
                };
                let syllable =
                    inventory
                        .parse_syllable(syl)
                        .map_err(|e| PinyinError::InvalidReading {
                            line: lineno,
                            text: syl.to_string(),
                            source: Box::new(e),
                        })?;
                entry.push(Reading { syllable, weight });
            }
            let total: f64 = entry.iter().map(|r| r.weight).sum();
            if total <= 0.0 {
                return Err(malformed("weights sum to zero"));
            }
            for r in &mut entry {
                r.weight /= total;
            }
            if readings.insert(ch, entry).is_some() {
                return Err(PinyinError::DuplicateEntry {
                    line: lineno,
                    hanzi: ch,
                });
            }
        }
        Ok(Self {
            readings,
            inventory: inventory.clone(),
        })
    }

    /// The ~3,000 character lexicon shipped with the crate.
    pub fn bundled() -> &'static PinyinLexicon {
        static LEXICON: OnceLock<PinyinLexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            PinyinLexicon::load(BUNDLED_LEXICON.as_bytes(), SyllableInventory::bundled())
                .expect("bundled lexicon is valid")
        })
    }

    pub fn readings(&self, ch: char) -> Option<&[Reading]> {
        self.readings.get(&ch).map(Vec::as_slice)
    }

    /// Highest-weight reading; the earliest listed one wins ties.
    pub fn top_reading(&self, ch: char) -> Option<Syllable> {
        let readings = self.readings.get(&ch)?;
        let mut best = &readings[0];
        for r in &readings[1..] {
            if r.weight > best.weight {
                best = r;
            }
        }
        Some(best.syllable)
    }

    pub fn contains(&self, ch: char) -> bool {
        self.readings.contains_key(&ch)
    }

    /// Entries in code-point order.
    pub fn iter(&self) -> impl Iterator<Item = (char, &[Reading])> {
        self.readings.iter().map(|(c, r)| (*c, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn inventory(&self) -> &SyllableInventory {
        &self.inventory
    }
}

/// Loads a lexicon validated against the bundled inventory.
pub fn load_lexicon<R: BufRead>(source: R) -> Result<PinyinLexicon, PinyinError> {
    PinyinLexicon::load(source, SyllableInventory::bundled())
}

/// Per-character reading lists for `text`.
pub fn hanzi_to_syllables(
    text: &str,
    lexicon: &PinyinLexicon,
) -> Result<Vec<Vec<Syllable>>, PinyinError> {
    text.chars()
        .enumerate()
        .map(|(index, ch)| {
            lexicon
                .readings(ch)
                .map(|rs| rs.iter().map(|r| r.syllable).collect())
                .ok_or(PinyinError::OutOfLexicon { index, ch })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyPair {
    pub a: String,
    pub b: String,
    pub cost: f64,
}

impl FuzzyPair {
    fn new(a: &str, b: &str, cost: f64) -> Self {
        Self {
            a: a.to_string(),
            b: b.to_string(),
            cost,
        }
    }

    fn matches(&self, x: &str, y: &str) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }

    fn partner(&self, x: &str) -> Option<&str> {
        if self.a == x {
            Some(&self.b)
        } else if self.b == x {
            Some(&self.a)
        } else {
            None
        }
    }
}

/// Costs of the fuzzy phonetic distance. Pairs are unordered, so lookups are
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyCostTable {
    pub initial_pairs: Vec<FuzzyPair>,
    pub final_pairs: Vec<FuzzyPair>,
    pub tone_mismatch_cost: f64,
    pub component_mismatch_cost: f64,
    pub indel_cost: f64,
}

impl Default for FuzzyCostTable {
    /// Input-method fuzzy pinyin conventions: z/zh, c/ch, s/sh, n/l, f/h, r/l
    /// and an/ang, en/eng, in/ing, ian/iang, uan/uang at 0.5.
    fn default() -> Self {
        let initial_pairs = [("z", "zh"), ("c", "ch"), ("s", "sh"), ("n", "l"), ("f", "h"), ("r", "l")]
            .iter()
            .map(|(a, b)| FuzzyPair::new(a, b, 0.5))
            .collect();
        let final_pairs = [("an", "ang"), ("en", "eng"), ("in", "ing"), ("ian", "iang"), ("uan", "uang")]
            .iter()
            .map(|(a, b)| FuzzyPair::new(a, b, 0.5))
            .collect();
        Self {
            initial_pairs,
            final_pairs,
            tone_mismatch_cost: 0.2,
            component_mismatch_cost: 1.0,
            indel_cost: 1.5,
        }
    }
}

impl FuzzyCostTable {
    pub fn validate(&self) -> Result<(), PinyinError> {
        let bad = |msg: String| Err(PinyinError::InvalidCosts(msg));
        for (name, v) in [
            ("tone_mismatch_cost", self.tone_mismatch_cost),
            ("component_mismatch_cost", self.component_mismatch_cost),
            ("indel_cost", self.indel_cost),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        for p in self.initial_pairs.iter().chain(&self.final_pairs) {
            if p.a == p.b {
                return bad(format!("pair {}/{} relates a component to itself", p.a, p.b));
            }
            if !(p.cost > 0.0 && p.cost < self.component_mismatch_cost) {
                return bad(format!(
                    "pair {}/{} cost {} outside (0, component_mismatch_cost)",
                    p.a, p.b, p.cost
                ));
            }
        }
        Ok(())
    }

    fn component_cost(&self, pairs: &[FuzzyPair], x: &str, y: &str) -> f64 {
        if x == y {
            return 0.0;
        }
        pairs
            .iter()
            .find(|p| p.matches(x, y))
            .map_or(self.component_mismatch_cost, |p| p.cost)
    }

    pub fn initial_cost(&self, x: &str, y: &str) -> f64 {
        self.component_cost(&self.initial_pairs, x, y)
    }

    pub fn final_cost(&self, x: &str, y: &str) -> f64 {
        self.component_cost(&self.final_pairs, x, y)
    }

    /// Fuzzy partners of an initial, in table order.
    pub fn initial_neighbors<'a>(&'a self, initial: &'a str) -> impl Iterator<Item = (&'a str, f64)> + 'a {
        self.initial_pairs
            .iter()
            .filter_map(move |p| p.partner(initial).map(|o| (o, p.cost)))
    }

    /// Fuzzy partners of a final, in table order.
    pub fn final_neighbors<'a>(&'a self, rime: &'a str) -> impl Iterator<Item = (&'a str, f64)> + 'a {
        self.final_pairs
            .iter()
            .filter_map(move |p| p.partner(rime).map(|o| (o, p.cost)))
    }
}

pub fn syllable_distance(a: &Syllable, b: &Syllable, costs: &FuzzyCostTable) -> f64 {
    let tone = if a.tone == b.tone {
        0.0
    } else {
        costs.tone_mismatch_cost
    };
    costs.initial_cost(a.initial, b.initial) + costs.final_cost(a.rime, b.rime) + tone
}

/// Weighted Levenshtein distance over syllables.
pub fn sequence_distance(a: &[Syllable], b: &[Syllable], costs: &FuzzyCostTable) -> f64 {
    let indel = costs.indel_cost;
    let mut prev: Vec<f64> = (0..=b.len()).map(|j| j as f64 * indel).collect();
    let mut cur = vec![0.0; b.len() + 1];
    for (i, sa) in a.iter().enumerate() {
        cur[0] = (i + 1) as f64 * indel;
        for (j, sb) in b.iter().enumerate() {
            let sub = prev[j] + syllable_distance(sa, sb, costs);
            let del = prev[j + 1] + indel;
            let ins = cur[j] + indel;
            cur[j + 1] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syl(s: &str) -> Syllable {
        parse_syllable(s).unwrap()
    }

    #[test]
    fn parses_with_greedy_initial() {
        let s = syl("zhang1");
        assert_eq!((s.initial, s.rime, s.tone), ("zh", "ang", 1));
        let s = syl("xian");
        assert_eq!((s.initial, s.rime, s.tone), ("x", "ian", 0));
        let s = syl("a");
        assert_eq!((s.initial, s.rime, s.tone), ("", "a", 0));
        let s = syl("er2");
        assert_eq!((s.initial, s.rime), ("", "er"));
        let s = syl("lv4");
        assert_eq!((s.initial, s.rime), ("l", "v"));
    }

    #[test]
    fn rejects_bad_syllables() {
        assert!(matches!(parse_syllable("xyz"), Err(PinyinError::UnknownSyllable(_))));
        assert!(matches!(parse_syllable("qqq7"), Err(PinyinError::InvalidTone(_))));
        assert!(matches!(parse_syllable("ma5"), Err(PinyinError::InvalidTone(_))));
        assert!(parse_syllable("").is_err());
        assert!(parse_syllable("3").is_err());
        assert!(parse_syllable("Ma1").is_err());
        // valid final, invalid combination
        assert!(parse_syllable("bue").is_err());
    }

    #[test]
    fn lexicon_lines() {
        let lex = load_lexicon("蓝\tlan2\n长\tchang2,zhang3\n".as_bytes()).unwrap();
        let lan = lex.readings('蓝').unwrap();
        assert_eq!(lan.len(), 1);
        assert_eq!(lan[0].syllable, syl("lan2"));
        assert_eq!(lan[0].weight, 1.0);
        let chang = lex.readings('长').unwrap();
        assert_eq!(chang[0].syllable, syl("chang2"));
        assert_eq!(chang[1].syllable, syl("zhang3"));
        assert_eq!(chang[0].weight, 0.5);
        assert_eq!(chang[1].weight, 0.5);
    }

    #[test]
    fn lexicon_partial_weights_normalize() {
        let lex = load_lexicon("# comment\n\n么\tme:0.8,mo\n".as_bytes()).unwrap();
        let rs = lex.readings('么').unwrap();
        assert!((rs[0].weight - 0.8 / 1.3).abs() < 1e-12);
        assert!((rs[1].weight - 0.5 / 1.3).abs() < 1e-12);
        assert_eq!(lex.top_reading('么'), Some(syl("me")));
    }

    #[test]
    fn lexicon_errors_carry_line_numbers() {
        let err = load_lexicon("蓝\tqqq7".as_bytes()).unwrap_err();
        assert!(matches!(err, PinyinError::InvalidReading { line: 1, .. }), "{err}");
        let err = load_lexicon("蓝\tlan2\n\n蓝\tlan2".as_bytes()).unwrap_err();
        assert!(matches!(err, PinyinError::DuplicateEntry { line: 3, hanzi: '蓝' }));
        let err = load_lexicon("蓝 lan2".as_bytes()).unwrap_err();
        assert!(matches!(err, PinyinError::Malformed { line: 1, .. }));
        let err = load_lexicon("蓝瘦\tlan2".as_bytes()).unwrap_err();
        assert!(matches!(err, PinyinError::Malformed { line: 1, .. }));
        let err = load_lexicon("蓝\tlan2:x".as_bytes()).unwrap_err();
        assert!(matches!(err, PinyinError::Malformed { .. }));
        let err = load_lexicon("蓝\tlan2:0".as_bytes()).unwrap_err();
        assert!(matches!(err, PinyinError::Malformed { .. }));
    }

    #[test]
    fn default_distances() {
        let c = FuzzyCostTable::default();
        c.validate().unwrap();
        assert_eq!(syllable_distance(&syl("lan2"), &syl("lan2"), &c), 0.0);
        assert_eq!(syllable_distance(&syl("lan2"), &syl("nan2"), &c), 0.5);
        assert!((syllable_distance(&syl("xiang1"), &syl("xiang3"), &c) - 0.2).abs() < 1e-12);
        assert_eq!(syllable_distance(&syl("gu1"), &syl("ku1"), &c), 1.0);
        assert_eq!(syllable_distance(&syl("zhi1"), &syl("zi1"), &c), 0.5);
        assert_eq!(syllable_distance(&syl("shen1"), &syl("sheng1"), &c), 0.5);
        assert!((syllable_distance(&syl("sao1"), &syl("shao4"), &c) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sequence_examples() {
        let c = FuzzyCostTable::default();
        let a = [syl("lan2"), syl("shou4")];
        assert_eq!(sequence_distance(&a, &a, &c), 0.0);
        assert_eq!(sequence_distance(&a, &[syl("nan2"), syl("shou4")], &c), 0.5);
        assert_eq!(sequence_distance(&[syl("lan2")], &[], &c), 1.5);
        assert_eq!(sequence_distance(&[], &[], &c), 0.0);
    }

    #[test]
    fn hanzi_lookup() {
        let lex = load_lexicon("蓝\tlan2\n瘦\tshou4\n长\tchang2,zhang3\n".as_bytes()).unwrap();
        assert_eq!(
            hanzi_to_syllables("蓝瘦", &lex).unwrap(),
            vec![vec![syl("lan2")], vec![syl("shou4")]]
        );
        assert_eq!(
            hanzi_to_syllables("长", &lex).unwrap(),
            vec![vec![syl("chang2"), syl("zhang3")]]
        );
        assert!(matches!(
            hanzi_to_syllables("蓝A", &lex),
            Err(PinyinError::OutOfLexicon { index: 1, ch: 'A' })
        ));
    }

    #[test]
    fn cost_table_validation() {
        let mut c = FuzzyCostTable::default();
        c.initial_pairs[0].cost = 1.0;
        assert!(c.validate().is_err());
        let c = FuzzyCostTable {
            indel_cost: -1.0,
            ..FuzzyCostTable::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn bundled_data_is_consistent() {
        let inv = SyllableInventory::bundled();
        assert!(inv.len() > 380);
        let lex = PinyinLexicon::bundled();
        assert!(lex.len() >= 3000);
        for (ch, readings) in lex.iter() {
            let total: f64 = readings.iter().map(|r| r.weight).sum();
            assert!((total - 1.0).abs() < 1e-9, "{ch}: {total}");
            for r in readings {
                assert!(inv.contains(r.syllable.initial, r.syllable.rime));
                assert_eq!(inv.parse_syllable(&r.syllable.to_string()).unwrap(), r.syllable);
            }
        }
        assert_eq!(lex.top_reading('蓝'), Some(syl("lan2")));
        assert_eq!(lex.top_reading('难'), Some(syl("nan2")));
    }
}
