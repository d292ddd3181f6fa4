//! Corpus profiling: Distinct-n, sentence BLEU / Self-BLEU and Jensen-Shannon
//! divergence between unigram distributions.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, unigram_distribution, Corpus, CorpusError, TokenMode, TokenSeq, UnigramDistribution};

/// Corpora larger than this are sampled for Self-BLEU unless told otherwise.
pub const SELF_BLEU_FULL_LIMIT: usize = 2000;
pub const SELF_BLEU_DEFAULT_SAMPLE: usize = 1000;
pub const SELF_BLEU_DEFAULT_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("corpus yields no {0}-grams")]
    NoNgrams(usize),
    #[error("n must be >= 1")]
    ZeroN,
    #[error("BLEU hypothesis is empty")]
    EmptyHypothesis,
    #[error("BLEU needs at least one non-empty reference")]
    NoReferences,
    #[error("Self-BLEU needs at least 2 non-empty sentences, got {0}")]
    TooFewSentences(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn tokenized(corpus: &Corpus) -> Vec<TokenSeq> {
    corpus.texts().map(|t| tokenize(t, TokenMode::Metric)).collect()
}

/// Corpus-level unique n-grams over total n-grams.
pub fn distinct_n(corpus: &Corpus, n: usize) -> Result<f64, MetricError> {
    distinct_n_tokens(&tokenized(corpus), n)
}

pub fn distinct_n_tokens(sentences: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroN);
    }
    let mut unique: HashSet<&[String]> = HashSet::new();
    let mut total = 0usize;
    for s in sentences {
        for gram in s.windows(n) {
            unique.insert(gram);
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::NoNgrams(n));
    }
    Ok(unique.len() as f64 / total as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u32> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Closest reference length to `c`, preferring the shorter one on ties.
fn closest_ref_len(c: usize, ref_lens: impl IntoIterator<Item = usize>) -> usize {
    ref_lens
        .into_iter()
        .min_by_key(|&r| (r.abs_diff(c), r))
        .expect("at least one reference")
}

fn combine(precisions: &[(u64, u64)], c: usize, r: usize) -> f64 {
    if precisions.iter().any(|&(m, _)| m == 0) {
        return 0.0;
    }
    let log_mean = precisions.iter().map(|&(m, t)| (m as f64 / t as f64).ln()).sum::<f64>() / precisions.len() as f64;
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * log_mean.exp()
}

/// Unsmoothed sentence BLEU with uniform weights over n = 1..min(max_n, |hyp|).
pub fn sentence_bleu(hypothesis: &TokenSeq, references: &[TokenSeq], max_n: usize) -> Result<f64, MetricError> {
    if max_n == 0 {
        return Err(MetricError::ZeroN);
    }
    if hypothesis.is_empty() {
        return Err(MetricError::EmptyHypothesis);
    }
    let refs: Vec<&TokenSeq> = references.iter().filter(|r| !r.is_empty()).collect();
    if refs.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let c = hypothesis.len();
    let effective_n = max_n.min(c);
    let mut precisions = Vec::with_capacity(effective_n);
    for n in 1..=effective_n {
        let hyp = ngram_counts(hypothesis, n);
        let mut max_ref: HashMap<&[String], u32> = HashMap::new();
        for r in &refs {
            for (g, cnt) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(cnt);
            }
        }
        let matched: u64 = hyp
            .iter()
            .map(|(g, &cnt)| cnt.min(max_ref.get(g).copied().unwrap_or(0)) as u64)
            .sum();
        precisions.push((matched, (c + 1 - n) as u64));
    }
    let r = closest_ref_len(c, refs.iter().map(|r| r.len()));
    Ok(combine(&precisions, c, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfBleuSampling {
    /// Score every sentence.
    Full,
    /// Score `size` sentences drawn with `seed`; references are still the whole corpus.
    Sampled { size: usize, seed: u64 },
    /// `Sampled` with the defaults when the corpus exceeds `SELF_BLEU_FULL_LIMIT`, else `Full`.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfBleu {
    pub score: f64,
    /// Number of hypotheses scored when sampling was applied.
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
}

/// Top-two per-sentence counts of one n-gram, so "max over all other
/// sentences" is a constant-time lookup.
#[derive(Clone, Copy, Default)]
struct TopTwo {
    best: (u32, usize),
    second: u32,
}

impl TopTwo {
    fn push(&mut self, count: u32, owner: usize) {
        if count > self.best.0 {
            self.second = self.best.0;
            self.best = (count, owner);
        } else if count > self.second {
            self.second = count;
        }
    }

    fn max_excluding(&self, owner: usize) -> u32 {
        if self.best.1 == owner {
            self.second
        } else {
            self.best.0
        }
    }
}

/// Mean sentence BLEU of each sentence against every other sentence.
///
/// Sentences that tokenize to nothing are ignored.
pub fn self_bleu(corpus: &Corpus, max_n: usize, sampling: SelfBleuSampling) -> Result<SelfBleu, MetricError> {
    self_bleu_tokens(&tokenized(corpus), max_n, sampling)
}

pub fn self_bleu_tokens(
    sentences: &[TokenSeq],
    max_n: usize,
    sampling: SelfBleuSampling,
) -> Result<SelfBleu, MetricError> {
    if max_n == 0 {
        return Err(MetricError::ZeroN);
    }
    let sents: Vec<&TokenSeq> = sentences.iter().filter(|s| !s.is_empty()).collect();
    if sents.len() < 2 {
        return Err(MetricError::TooFewSentences(sents.len()));
    }

    let (hyps, sample_size, seed): (Vec<usize>, _, _) = match sampling {
        SelfBleuSampling::Auto if sents.len() > SELF_BLEU_FULL_LIMIT => {
            sampled(sents.len(), SELF_BLEU_DEFAULT_SAMPLE, SELF_BLEU_DEFAULT_SEED)
        }
        SelfBleuSampling::Sampled { size, seed } if size < sents.len() => sampled(sents.len(), size, seed),
        _ => ((0..sents.len()).collect(), None, None),
    };

    let mut tables: Vec<HashMap<&[String], TopTwo>> = vec![HashMap::new(); max_n];
    for (owner, s) in sents.iter().enumerate() {
        for (n, table) in tables.iter_mut().enumerate() {
            for (g, cnt) in ngram_counts(s, n + 1) {
                table.entry(g).or_default().push(cnt, owner);
            }
        }
    }
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &sents {
        *lengths.entry(s.len()).or_insert(0) += 1;
    }

    let scores: Vec<f64> = hyps
        .par_iter()
        .map(|&i| {
            let hyp = sents[i];
            let c = hyp.len();
            let precisions: Vec<(u64, u64)> = (1..=max_n.min(c))
                .map(|n| {
                    let table = &tables[n - 1];
                    let matched = ngram_counts(hyp, n)
                        .into_iter()
                        .map(|(g, cnt)| cnt.min(table[g].max_excluding(i)) as u64)
                        .sum();
                    (matched, (c + 1 - n) as u64)
                })
                .collect();
            let other_lens = lengths
                .iter()
                .filter(|&(&len, &k)| len != c || k > 1)
                .map(|(&len, _)| len);
            combine(&precisions, c, closest_ref_len(c, other_lens))
        })
        .collect();
    let score = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(SelfBleu {
        score,
        sample_size,
        seed,
    })
}

fn sampled(len: usize, size: usize, seed: u64) -> (Vec<usize>, Option<usize>, Option<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, size.max(1)).into_vec();
    idx.sort_unstable();
    let n = idx.len();
    (idx, Some(n), Some(seed))
}

/// Base-2 Jensen-Shannon divergence over the union support, in [0, 1].
pub fn js_divergence(p: &UnigramDistribution, q: &UnigramDistribution) -> Result<f64, MetricError> {
    for d in [p, q] {
        let sum: f64 = d.iter().map(|(_, x)| x).sum();
        if d.iter().any(|(_, x)| !x.is_finite() || x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::InvalidDistribution(format!("mass {sum}")));
        }
    }
    let mut keys: Vec<&str> = p.iter().map(|(k, _)| k).chain(q.iter().map(|(k, _)| k)).collect();
    keys.sort_unstable();
    keys.dedup();
    let term = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let total: f64 = keys
        .into_iter()
        .map(|k| {
            let (a, b) = (p.get(k), q.get(k));
            let m = 0.5 * (a + b);
            term(a, m) + term(b, m)
        })
        .sum();
    Ok((0.5 * total).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub distinct1: f64,
    pub distinct2: f64,
    pub self_bleu4: f64,
    pub js_div: f64,
    /// Hypotheses scored for Self-BLEU when sampled; `None` means all.
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
}

/// Diversity of `synthetic` plus its unigram divergence from `reference`.
pub fn profile_corpus(
    synthetic: &Corpus,
    reference: &Corpus,
    sampling: SelfBleuSampling,
) -> Result<CorpusProfile, MetricError> {
    let toks = tokenized(synthetic);
    let sb = self_bleu_tokens(&toks, 4, sampling)?;
    Ok(CorpusProfile {
        distinct1: distinct_n_tokens(&toks, 1)?,
        distinct2: distinct_n_tokens(&toks, 2)?,
        self_bleu4: sb.score,
        js_div: js_divergence(&unigram_distribution(synthetic)?, &unigram_distribution(reference)?)?,
        sample_size: sb.sample_size,
        seed: sb.seed,
    })
}
