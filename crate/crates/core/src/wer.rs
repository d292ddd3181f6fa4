//! Word error rate: Levenshtein alignment, pooled WER and the cross-domain
//! report with per-domain relative improvements.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_domain, tokenize, TokenMode, TokenSeq};

#[derive(Debug, Error)]
pub enum WerError {
    #[error("total reference length is zero")]
    EmptyReference,
    #[error("baseline WER must be > 0, got {0}")]
    NonPositiveBaseline(f64),
    #[error("report needs at least one domain result")]
    NoResults,
    #[error("pairs line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Match,
    Substitute,
    Insert,
    Delete,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn hyp_len(&self) -> usize {
        self.substitutions + self.insertions + self.matches
    }
}

/// Unit-cost Levenshtein alignment. The backtrace prefers match, then
/// substitution, then deletion, then insertion.
pub fn align(reference: &[String], hypothesis: &[String]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut d = vec![0u32; (n + 1) * width];
    for (j, cell) in d.iter_mut().take(width).enumerate() {
        *cell = j as u32;
    }
    for i in 1..=n {
        d[i * width] = i as u32;
        for j in 1..=m {
            let sub = d[(i - 1) * width + j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * width + j - 1];
            if reference[i - 1] == hypothesis[j - 1] && diag == here {
                ops.push(EditOp::Match);
                i -= 1;
                j -= 1;
                continue;
            }
            if diag + 1 == here {
                ops.push(EditOp::Substitute);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::Delete);
            i -= 1;
        } else {
            ops.push(EditOp::Insert);
            j -= 1;
        }
    }
    ops.reverse();

    let count = |op| ops.iter().filter(|&&o| o == op).count();
    Alignment {
        matches: count(EditOp::Match),
        substitutions: count(EditOp::Substitute),
        deletions: count(EditOp::Delete),
        insertions: count(EditOp::Insert),
        ref_len: n,
        ops,
    }
}

/// Running edit/reference totals for pooled WER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerTally {
    pub errors: usize,
    pub ref_tokens: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub utterances: usize,
}

impl WerTally {
    pub fn add(&mut self, a: &Alignment) {
        self.errors += a.errors();
        self.ref_tokens += a.ref_len;
        self.substitutions += a.substitutions;
        self.deletions += a.deletions;
        self.insertions += a.insertions;
        self.utterances += 1;
    }

    pub fn merge(&mut self, other: &WerTally) {
        self.errors += other.errors;
        self.ref_tokens += other.ref_tokens;
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.utterances += other.utterances;
    }

    /// Percentage; `None` when there are no reference tokens.
    pub fn wer(&self) -> Option<f64> {
        (self.ref_tokens > 0).then(|| self.errors as f64 / self.ref_tokens as f64 * 100.0)
    }
}

/// Pooled WER in percent: total edits over total reference tokens.
pub fn wer(pairs: &[(TokenSeq, TokenSeq)]) -> Result<f64, WerError> {
    let mut tally = WerTally::default();
    for (r, h) in pairs {
        tally.add(&align(r, h));
    }
    tally.wer().ok_or(WerError::EmptyReference)
}

pub fn relative_reduction(baseline: f64, adapted: f64) -> Result<f64, WerError> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(WerError::NonPositiveBaseline(baseline));
    }
    Ok((baseline - adapted) / baseline * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    pub domain: String,
    pub baseline_wer: f64,
    pub adapted_wer: f64,
    pub relative_improvement: f64,
}

impl DomainResult {
    pub fn new(domain: impl Into<String>, baseline_wer: f64, adapted_wer: f64) -> Result<Self, WerError> {
        Ok(Self {
            domain: domain.into(),
            baseline_wer,
            adapted_wer,
            relative_improvement: relative_reduction(baseline_wer, adapted_wer)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainReport {
    pub rows: Vec<DomainResult>,
    pub mean_baseline_wer: f64,
    pub mean_adapted_wer: f64,
    /// Macro mean of per-domain relative improvements; the "Average" of the
    /// relative-improvement row.
    pub mean_relative_improvement: f64,
    /// Relative improvement of the mean adapted WER over the mean baseline WER.
    pub relative_of_means: f64,
}

pub fn cross_domain_report(results: &[DomainResult]) -> Result<CrossDomainReport, WerError> {
    if results.is_empty() {
        return Err(WerError::NoResults);
    }
    let n = results.len() as f64;
    let mean = |f: fn(&DomainResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let mean_baseline_wer = mean(|r| r.baseline_wer);
    let mean_adapted_wer = mean(|r| r.adapted_wer);
    Ok(CrossDomainReport {
        rows: results.to_vec(),
        mean_baseline_wer,
        mean_adapted_wer,
        mean_relative_improvement: mean(|r| r.relative_improvement),
        relative_of_means: relative_reduction(mean_baseline_wer, mean_adapted_wer)?,
    })
}

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptPair {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub domain: String,
}

pub fn read_pairs(reader: impl BufRead) -> Result<Vec<TranscriptPair>, WerError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut pair: TranscriptPair = serde_json::from_str(&line).map_err(|e| WerError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        pair.domain = normalize_domain(&pair.domain);
        out.push(pair);
    }
    Ok(out)
}

/// Pooled tallies per domain, sorted by domain name.
pub fn domain_tallies(pairs: &[TranscriptPair], mode: TokenMode) -> BTreeMap<String, WerTally> {
    let mut out: BTreeMap<String, WerTally> = BTreeMap::new();
    for p in pairs {
        let a = align(&tokenize(&p.reference, mode), &tokenize(&p.hypothesis, mode));
        out.entry(p.domain.clone()).or_default().add(&a);
    }
    out
}
