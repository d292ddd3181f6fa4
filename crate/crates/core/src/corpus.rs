//! Labeled text corpora, the shared tokenizer and the leave-one-domain-out split.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("invalid utterance {id:?}: {reason}")]
    InvalidUtterance { id: String, reason: &'static str },
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("unknown domain {domain:?}; available: {}", available.join(", "))]
    UnknownDomain { domain: String, available: Vec<String> },
    #[error("corpus contains no tokens")]
    NoTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Real,
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Real => f.write_str("real"),
            Source::Synthetic => f.write_str("synthetic"),
        }
    }
}

/// One domain-labeled sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub domain: String,
    #[serde(default)]
    pub source: Source,
}

impl Utterance {
    /// Validates the text and normalizes the domain label (trimmed, lowercase).
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        domain: &str,
        source: Source,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(CorpusError::InvalidUtterance { id, reason: "empty id" });
        }
        if text.trim().is_empty() {
            return Err(CorpusError::InvalidUtterance {
                id,
                reason: "text is blank",
            });
        }
        let domain = normalize_domain(domain);
        if domain.is_empty() {
            return Err(CorpusError::InvalidUtterance {
                id,
                reason: "domain is blank",
            });
        }
        Ok(Self {
            id,
            text,
            domain,
            source,
        })
    }
}

pub fn normalize_domain(domain: &str) -> String {
    domain.trim().to_lowercase()
}

/// Ordered collection of utterances with distinct ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    name: String,
    utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(utterances.len());
        for u in &utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            utterances,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            utterances: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Utterance> {
        self.utterances.iter()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Distinct domain labels in sorted order.
    pub fn domains(&self) -> Vec<String> {
        self.utterances
            .iter()
            .map(|u| u.domain.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect()
    }

    /// Utterance counts per domain, sorted by domain.
    pub fn domain_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for u in &self.utterances {
            *counts.entry(u.domain.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Sub-corpus of utterances with the given (normalized) domain.
    pub fn filter_domain(&self, domain: &str) -> Corpus {
        let domain = normalize_domain(domain);
        Corpus {
            name: format!("{}[{}]", self.name, domain),
            utterances: self.utterances.iter().filter(|u| u.domain == domain).cloned().collect(),
        }
    }

    /// The first `n` utterances (or all of them when `n >= len`).
    pub fn prefix(&self, n: usize) -> Corpus {
        Corpus {
            name: self.name.clone(),
            utterances: self.utterances.iter().take(n).cloned().collect(),
        }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().map(|u| u.text.as_str())
    }

    pub fn into_utterances(self) -> Vec<Utterance> {
        self.utterances
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Utterance;
    type IntoIter = std::slice::Iter<'a, Utterance>;

    fn into_iter(self) -> Self::IntoIter {
        self.utterances.iter()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    domain: String,
    #[serde(default)]
    source: Source,
}

/// Reads a line-delimited JSON corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_corpus(BufReader::new(file), name)
}

pub fn read_corpus(reader: impl BufRead, name: impl Into<String>) -> Result<Corpus, CorpusError> {
    let mut utterances = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let utt = Utterance::new(raw.id, raw.text, &raw.domain, raw.source).map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if !seen.insert(utt.id.clone()) {
            return Err(CorpusError::DuplicateId(utt.id));
        }
        utterances.push(utt);
    }
    Ok(Corpus {
        name: name.into(),
        utterances,
    })
}

/// Writes one JSON object per line with keys `id`, `text`, `domain`, `source`.
pub fn write_corpus(corpus: &Corpus, writer: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for u in corpus {
        serde_json::to_writer(&mut w, u)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_corpus(corpus, file).map_err(io_err)
}

/// Whitespace-free, non-empty tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(CorpusError::InvalidToken(bad.clone()));
        }
        Ok(Self(tokens))
    }

    /// Convenience for tests and literals: splits on whitespace without normalizing.
    pub fn from_words(s: &str) -> Self {
        Self(s.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: String) -> Result<(), CorpusError> {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidToken(token));
        }
        self.0.push(token);
        Ok(())
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = CorpusError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(tokens)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(seq: TokenSeq) -> Self {
        seq.0
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenMode {
    #[default]
    Metric,
    Wer,
    /// Whitespace split only; used when WER scoring is asked to skip normalization.
    Raw,
}

/// Lowercases, splits on Unicode whitespace and strips leading/trailing
/// non-alphanumeric characters from every token. `Metric` and `Wer` share the
/// same normalizer.
pub fn tokenize(text: &str, mode: TokenMode) -> TokenSeq {
    match mode {
        TokenMode::Metric | TokenMode::Wer => TokenSeq(
            text.split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
                .collect(),
        ),
        TokenMode::Raw => TokenSeq::from_words(text),
    }
}

#[derive(Debug, Clone)]
pub struct DomainSplit {
    pub target_domain: String,
    pub source_train: Corpus,
    pub target_test: Corpus,
}

/// Holds out `target_domain` as the test split and keeps every other domain as
/// source training data.
pub fn leave_one_domain_out(corpus: &Corpus, target_domain: &str) -> Result<DomainSplit, CorpusError> {
    let target = normalize_domain(target_domain);
    if !corpus.iter().any(|u| u.domain == target) {
        return Err(CorpusError::UnknownDomain {
            domain: target,
            available: corpus.domains(),
        });
    }
    let (test, train): (Vec<_>, Vec<_>) = corpus.iter().cloned().partition(|u| u.domain == target);
    Ok(DomainSplit {
        source_train: Corpus {
            name: format!("{}-source-no-{}", corpus.name, target),
            utterances: train,
        },
        target_test: Corpus {
            name: format!("{}-target-{}", corpus.name, target),
            utterances: test,
        },
        target_domain: target,
    })
}

/// Word-level unigram distribution, keyed by token in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramDistribution(BTreeMap<String, f64>);

impl UnigramDistribution {
    /// Validates that all probabilities are finite, non-negative and sum to 1 ± 1e-9.
    pub fn from_probs(probs: BTreeMap<String, f64>) -> Option<Self> {
        let mut sum = 0.0;
        for &p in probs.values() {
            if !p.is_finite() || p < 0.0 {
                return None;
            }
            sum += p;
        }
        ((sum - 1.0).abs() <= 1e-9).then_some(Self(probs))
    }

    pub fn get(&self, token: &str) -> f64 {
        self.0.get(token).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}

pub fn unigram_distribution(corpus: &Corpus) -> Result<UnigramDistribution, CorpusError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for u in corpus {
        for tok in tokenize(&u.text, TokenMode::Metric).into_inner() {
            *counts.entry(tok).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(CorpusError::NoTokens);
    }
    let total = total as f64;
    Ok(UnigramDistribution(
        counts.into_iter().map(|(tok, c)| (tok, c as f64 / total)).collect(),
    ))
}
