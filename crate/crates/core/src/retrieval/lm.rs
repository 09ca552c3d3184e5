//! Add-k smoothed character bigram language model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use super::RetrievalError;

const LM_HEADER: &str = "duanzai-bigram-lm";
const LM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Bos,
    Char(char),
    Eos,
}

impl Token {
    fn render(self) -> String {
        match self {
            Token::Bos => "<s>".to_string(),
            Token::Eos => "</s>".to_string(),
            Token::Char(c) => c.to_string(),
        }
    }

    fn parse(s: &str) -> Option<Token> {
        match s {
            "<s>" => Some(Token::Bos),
            "</s>" => Some(Token::Eos),
            _ => {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some(Token::Char(c)),
                    _ => None,
                }
            }
        }
    }
}

/// `P(c | p) = (count(p, c) + k) / (count(p) + k·|V|)` where `V` is the set of
/// seen characters plus EOS. Characters outside `V` are scored like unseen
/// bigrams and an unseen context yields the uniform `1/|V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    vocab: BTreeSet<char>,
    unigram_counts: HashMap<char, u64>,
    context_counts: HashMap<Token, u64>,
    bigram_counts: HashMap<(Token, Token), u64>,
    smoothing_k: f64,
}

impl BigramLm {
    pub fn train<S: AsRef<str>>(texts: &[S], smoothing_k: f64) -> Result<Self, RetrievalError> {
        if !(smoothing_k > 0.0 && smoothing_k.is_finite()) {
            return Err(RetrievalError::InvalidParameter(format!(
                "smoothing k must be positive, got {smoothing_k}"
            )));
        }
        let mut bigrams: BTreeMap<(Token, Token), u64> = BTreeMap::new();
        for text in texts {
            let text = text.as_ref().trim();
            if text.is_empty() {
                continue;
            }
            let mut prev = Token::Bos;
            for c in text.chars().filter(|c| !c.is_whitespace()) {
                *bigrams.entry((prev, Token::Char(c))).or_default() += 1;
                prev = Token::Char(c);
            }
            *bigrams.entry((prev, Token::Eos)).or_default() += 1;
        }
        if bigrams.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        Ok(Self::from_bigrams(bigrams, smoothing_k))
    }

    fn from_bigrams(bigrams: BTreeMap<(Token, Token), u64>, smoothing_k: f64) -> Self {
        let mut vocab = BTreeSet::new();
        let mut unigram_counts = HashMap::new();
        let mut context_counts = HashMap::new();
        for (&(p, c), &n) in &bigrams {
            *context_counts.entry(p).or_default() += n;
            if let Token::Char(ch) = c {
                vocab.insert(ch);
                *unigram_counts.entry(ch).or_default() += n;
            }
        }
        Self {
            vocab,
            unigram_counts,
            context_counts,
            bigram_counts: bigrams.into_iter().collect(),
            smoothing_k,
        }
    }

    /// |V|: distinct characters plus EOS.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn vocab(&self) -> impl Iterator<Item = char> + '_ {
        self.vocab.iter().copied()
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn unigram_count(&self, c: char) -> u64 {
        self.unigram_counts.get(&c).copied().unwrap_or(0)
    }

    pub fn bigram_count(&self, prev: Token, next: Token) -> u64 {
        self.bigram_counts.get(&(prev, next)).copied().unwrap_or(0)
    }

    pub fn prob(&self, prev: Token, next: Token) -> f64 {
        let k = self.smoothing_k;
        let ctx = self.context_counts.get(&prev).copied().unwrap_or(0) as f64;
        (self.bigram_count(prev, next) as f64 + k) / (ctx + k * self.vocab_size() as f64)
    }

    pub fn log_prob(&self, prev: Token, next: Token) -> f64 {
        self.prob(prev, next).ln()
    }

    /// Log-probability of a whole string, BOS and EOS included.
    pub fn score(&self, text: &str) -> f64 {
        let mut prev = Token::Bos;
        let mut total = 0.0;
        for c in text.chars() {
            total += self.log_prob(prev, Token::Char(c));
            prev = Token::Char(c);
        }
        total + self.log_prob(prev, Token::Eos)
    }

    /// Versioned counts table: a header, the smoothing constant, then one
    /// `bigram<TAB>prev<TAB>next<TAB>count` row per observed bigram.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{LM_HEADER}\t{LM_VERSION}")?;
        writeln!(out, "k\t{}", self.smoothing_k)?;
        let sorted: BTreeMap<_, _> = self.bigram_counts.iter().collect();
        for ((p, c), n) in sorted {
            writeln!(out, "bigram\t{}\t{}\t{n}", p.render(), c.render())?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, RetrievalError> {
        let mut lines = input.lines().enumerate();
        let bad = |line: usize, msg: &str| RetrievalError::LmFormat {
            line,
            reason: msg.to_string(),
        };
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(bad(1, "empty file")),
        };
        if header != format!("{LM_HEADER}\t{LM_VERSION}") {
            return Err(bad(1, "unsupported header or version"));
        }
        let mut k = None;
        let mut bigrams = BTreeMap::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["k", v] => {
                    let v: f64 = v.parse().map_err(|_| bad(lineno, "bad smoothing constant"))?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(bad(lineno, "smoothing constant must be positive"));
                    }
                    k = Some(v);
                }
                ["bigram", p, c, n] => {
                    let p = Token::parse(p).ok_or_else(|| bad(lineno, "bad context token"))?;
                    let c = Token::parse(c).ok_or_else(|| bad(lineno, "bad next token"))?;
                    if p == Token::Eos || c == Token::Bos {
                        return Err(bad(lineno, "misplaced boundary token"));
                    }
                    let n: u64 = n.parse().map_err(|_| bad(lineno, "bad count"))?;
                    if bigrams.insert((p, c), n).is_some() {
                        return Err(bad(lineno, "duplicate bigram"));
                    }
                }
                _ => return Err(bad(lineno, "unrecognized row")),
            }
        }
        let k = k.ok_or_else(|| bad(1, "missing smoothing constant"))?;
        if bigrams.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        Ok(Self::from_bigrams(bigrams, k))
    }
}

pub fn train_bigram_lm<S: AsRef<str>>(texts: &[S], smoothing_k: f64) -> Result<BigramLm, RetrievalError> {
    BigramLm::train(texts, smoothing_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_arithmetic() {
        let lm = train_bigram_lm(&["难受想哭"], 0.1).unwrap();
        assert_eq!(lm.vocab_size(), 5);
        let p = lm.prob(Token::Char('难'), Token::Char('受'));
        assert!((p - 1.1 / 1.5).abs() < 1e-12);
        let p = lm.prob(Token::Char('哭'), Token::Char('难'));
        assert!((p - 0.1 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn conditionals_normalize() {
        let lm = train_bigram_lm(&["难受想哭", "今天很难受", "想哭"], 0.1).unwrap();
        let contexts: Vec<Token> = std::iter::once(Token::Bos)
            .chain(lm.vocab().map(Token::Char))
            .chain(std::iter::once(Token::Char('外')))
            .collect();
        for p in contexts {
            let total: f64 = lm
                .vocab()
                .map(Token::Char)
                .chain(std::iter::once(Token::Eos))
                .map(|c| lm.prob(p, c))
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "{p:?}: {total}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bigram_lm::<&str>(&[], 0.1), Err(RetrievalError::EmptyCorpus)));
        assert!(matches!(train_bigram_lm(&["", "  "], 0.1), Err(RetrievalError::EmptyCorpus)));
        assert!(train_bigram_lm(&["难受"], 0.0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let lm = train_bigram_lm(&["难受想哭", "今天很难受"], 0.25).unwrap();
        let mut buf = Vec::new();
        lm.write(&mut buf).unwrap();
        let back = BigramLm::read(buf.as_slice()).unwrap();
        assert_eq!(lm, back);
        assert!(BigramLm::read("duanzai-bigram-lm\t2\n".as_bytes()).is_err());
        assert!(BigramLm::read("duanzai-bigram-lm\t1\nk\t0.1\nbigram\t</s>\t难\t1\n".as_bytes()).is_err());
    }
}
