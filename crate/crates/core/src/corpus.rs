//! Annotated pun corpus: JSONL loading, validation, splitting and a
//! deterministic synthetic generator.
//!
//! Span offsets count Unicode scalar values, never bytes.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pinyin::is_hanzi;

pub const PUN_HOLE: &str = "{PUN}";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: instance {id:?}: field `{field}`: {reason}")]
    Invalid {
        line: usize,
        id: String,
        field: &'static str,
        reason: String,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("template {index} must contain exactly one {PUN_HOLE} hole, found {holes}")]
    TemplateHoles { index: usize, holes: usize },
    #[error("synthetic generation needs at least one pun pair")]
    NoPairs,
    #[error("cannot split: {0}")]
    Split(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Characters of `text` covered by the span.
    pub fn slice(&self, text: &str) -> String {
        text.chars().skip(self.start).take(self.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PunInstance {
    pub id: String,
    pub text: String,
    pub punchline: Span,
    pub original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl PunInstance {
    pub fn surface(&self) -> String {
        self.punchline.slice(&self.text)
    }

    /// Checks the instance invariants, returning the offending field.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if self.id.is_empty() {
            return Err(("id", "empty id".into()));
        }
        let len = self.text.chars().count();
        let Span { start, end } = self.punchline;
        if start >= end || end > len {
            return Err((
                "punchline",
                format!("span ({start},{end}) invalid for text of {len} characters"),
            ));
        }
        if !self.surface().chars().all(is_hanzi) {
            return Err(("punchline", "punchline not hanzi".into()));
        }
        if self.original.trim().is_empty() {
            return Err(("original", "empty original".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub name: String,
    pub version: String,
    pub n_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub version: String,
    pub instances: Vec<PunInstance>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, instances: Vec<PunInstance>) -> Self {
        Self {
            name: name.into(),
            version: "1".into(),
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn info(&self) -> CorpusInfo {
        CorpusInfo {
            name: self.name.clone(),
            version: self.version.clone(),
            n_instances: self.instances.len(),
        }
    }

    /// One JSON object per line, in instance order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parses line-delimited JSON instances. Blank lines are skipped; every other
/// line must hold one valid instance.
pub fn parse_instances<R: BufRead>(stream: R) -> Result<Corpus, CorpusError> {
    let mut instances = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in stream.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst: PunInstance =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                line: lineno,
                source,
            })?;
        inst.check().map_err(|(field, reason)| CorpusError::Invalid {
            line: lineno,
            id: inst.id.clone(),
            field,
            reason,
        })?;
        if !seen.insert(inst.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: inst.id,
            });
        }
        instances.push(inst);
    }
    Ok(Corpus::new("corpus", instances))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// One template per line; `#` lines and blank lines are skipped.
pub fn parse_templates(text: &str) -> Vec<String> {
    data_lines(text).map(|(_, l)| l.to_string()).collect()
}

/// `pun<TAB>original` per line; `#` lines and blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CorpusError> {
    data_lines(text)
        .map(|(line, l)| {
            let invalid = |reason: &str| CorpusError::Invalid {
                line,
                id: String::new(),
                field: "pair",
                reason: reason.into(),
            };
            let (pun, original) = l.split_once('\t').ok_or_else(|| invalid("expected pun<TAB>original"))?;
            let (pun, original) = (pun.trim(), original.trim());
            if pun.is_empty() || original.is_empty() || original.contains('\t') {
                return Err(invalid("expected two non-empty fields"));
            }
            if !pun.chars().all(is_hanzi) {
                return Err(invalid("pun must be hanzi"));
            }
            Ok((pun.to_string(), original.to_string()))
        })
        .collect()
}

/// Every template crossed with every pair, shuffled by `seed`. Ids are
/// `syn-<n>` in output order.
pub fn generate_synthetic(
    templates: &[String],
    pairs: &[(String, String)],
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if pairs.is_empty() {
        return Err(CorpusError::NoPairs);
    }
    let mut prefixes = Vec::with_capacity(templates.len());
    for (index, t) in templates.iter().enumerate() {
        let holes = t.matches(PUN_HOLE).count();
        if holes != 1 {
            return Err(CorpusError::TemplateHoles { index, holes });
        }
        let (prefix, suffix) = t.split_once(PUN_HOLE).expect("one hole");
        prefixes.push((prefix, suffix));
    }

    let mut cells: Vec<(usize, usize)> = (0..templates.len())
        .flat_map(|t| (0..pairs.len()).map(move |p| (t, p)))
        .collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut instances = Vec::with_capacity(cells.len());
    for (n, (t, p)) in cells.into_iter().enumerate() {
        let (prefix, suffix) = prefixes[t];
        let (pun, original) = &pairs[p];
        let start = prefix.chars().count();
        let inst = PunInstance {
            id: format!("syn-{n}"),
            text: format!("{prefix}{pun}{suffix}"),
            punchline: Span::new(start, start + pun.chars().count()),
            original: original.clone(),
            source: Some(format!("synthetic:t{t}:p{p}")),
        };
        inst.check().map_err(|(field, reason)| CorpusError::Invalid {
            line: 0,
            id: inst.id.clone(),
            field,
            reason,
        })?;
        instances.push(inst);
    }
    let mut corpus = Corpus::new("synthetic", instances);
    corpus.version = format!("seed-{seed}");
    Ok(corpus)
}

/// Deterministic shuffled partition. The train side gets
/// `round(train_fraction * n)` instances (halves round up); both sides keep
/// the corpus order.
pub fn split(
    corpus: &Corpus,
    train_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Split("corpus is empty".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::Split(format!(
            "train fraction {train_fraction} not in (0,1)"
        )));
    }
    let n = corpus.len();
    let n_train = ((train_fraction * n as f64) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize], suffix: &str| Corpus {
        name: format!("{}-{suffix}", corpus.name),
        version: corpus.version.clone(),
        instances: idx.iter().map(|&i| corpus.instances[i].clone()).collect(),
    };
    Ok((pick(&train_idx, "train"), pick(&test_idx, "test")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn pairs(xs: &[(&str, &str)]) -> Vec<(String, String)> {
        xs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn parses_fixture_line() {
        let line = r#"{"id":"t1","text":"我蓝瘦香菇","punchline":{"start":1,"end":5},"original":"难受想哭"}"#;
        let corpus = parse_instances(line.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.instances[0].surface(), "蓝瘦香菇");
        assert_eq!(corpus.instances[0].source, None);
    }

    #[test]
    fn rejects_non_hanzi_punchline() {
        let line = r#"{"id":"t2","text":"abc","punchline":{"start":0,"end":1},"original":"x"}"#;
        let err = parse_instances(line.as_bytes()).unwrap_err();
        match err {
            CorpusError::Invalid { line, id, field, .. } => {
                assert_eq!((line, id.as_str(), field), (1, "t2", "punchline"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        assert!(parse_instances("".as_bytes()).unwrap().is_empty());
        assert!(parse_instances("\n  \n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn located_errors() {
        let ok = r#"{"id":"a","text":"我蓝瘦","punchline":{"start":1,"end":3},"original":"难受"}"#;
        let input = format!("{ok}\n{{not json\n");
        assert!(matches!(
            parse_instances(input.as_bytes()),
            Err(CorpusError::Json { line: 2, .. })
        ));
        let input = format!("{ok}\n{ok}\n");
        assert!(matches!(
            parse_instances(input.as_bytes()),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
        // multi-span punchlines are not part of the schema
        let multi = r#"{"id":"m","text":"我蓝瘦","punchline":[{"start":1,"end":3}],"original":"难受"}"#;
        assert!(matches!(
            parse_instances(multi.as_bytes()),
            Err(CorpusError::Json { line: 1, .. })
        ));
        let bad_span = r#"{"id":"s","text":"我蓝瘦","punchline":{"start":2,"end":9},"original":"难受"}"#;
        assert!(matches!(
            parse_instances(bad_span.as_bytes()),
            Err(CorpusError::Invalid { field: "punchline", .. })
        ));
        let empty_orig = r#"{"id":"s","text":"我蓝瘦","punchline":{"start":1,"end":3},"original":""}"#;
        assert!(matches!(
            parse_instances(empty_orig.as_bytes()),
            Err(CorpusError::Invalid { field: "original", .. })
        ));
    }

    #[test]
    fn synthetic_single_cell() {
        let c = generate_synthetic(&strings(&["今天{PUN}了"]), &pairs(&[("蓝瘦香菇", "难受想哭")]), 1)
            .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.instances[0].punchline, Span::new(2, 6));
        assert_eq!(c.instances[0].text, "今天蓝瘦香菇了");
        assert_eq!(c.instances[0].id, "syn-0");
    }

    #[test]
    fn synthetic_grid_and_determinism() {
        let t = strings(&["今天{PUN}了", "{PUN}啊", "他说{PUN}"]);
        let p = pairs(&[("河蟹", "和谐"), ("杯具", "悲剧"), ("鸭梨", "压力"), ("童鞋", "同学")]);
        let a = generate_synthetic(&t, &p, 42).unwrap();
        assert_eq!(a.len(), 12);
        let ids: HashSet<_> = a.instances.iter().map(|i| i.id.clone()).collect();
        assert_eq!(ids.len(), 12);
        let b = generate_synthetic(&t, &p, 42).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        for inst in &a.instances {
            inst.check().unwrap();
        }
    }

    #[test]
    fn synthetic_rejects_bad_templates() {
        let p = pairs(&[("河蟹", "和谐")]);
        assert!(matches!(
            generate_synthetic(&strings(&["没有洞"]), &p, 0),
            Err(CorpusError::TemplateHoles { index: 0, holes: 0 })
        ));
        assert!(matches!(
            generate_synthetic(&strings(&["{PUN}", "{PUN}{PUN}"]), &p, 0),
            Err(CorpusError::TemplateHoles { index: 1, holes: 2 })
        ));
        assert!(matches!(
            generate_synthetic(&strings(&["{PUN}"]), &[], 0),
            Err(CorpusError::NoPairs)
        ));
    }

    #[test]
    fn split_sizes() {
        let t = strings(&["今天{PUN}了", "我{PUN}"]);
        let p = pairs(&[("河蟹", "和谐"), ("杯具", "悲剧"), ("鸭梨", "压力"), ("童鞋", "同学"), ("骚年", "少年")]);
        let c = generate_synthetic(&t, &p, 3).unwrap();
        let (train, test) = split(&c, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let a: HashSet<_> = train.instances.iter().map(|i| &i.id).collect();
        assert!(test.instances.iter().all(|i| !a.contains(&i.id)));
        let (train2, test2) = split(&c, 0.8, 7).unwrap();
        assert_eq!((train, test), (train2, test2));

        let one = Corpus::new("one", c.instances[..1].to_vec());
        let (train, test) = split(&one, 0.5, 0).unwrap();
        assert_eq!((train.len(), test.len()), (1, 0));
        assert!(split(&Corpus::new("e", vec![]), 0.5, 0).is_err());
    }
}
