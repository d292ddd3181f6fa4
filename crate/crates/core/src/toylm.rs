//! Backoff n-gram language model used as an offline stand-in for the
//! completion LLM.
//!
//! Lookup walks from the longest usable context (the last `order - 1` tokens)
//! down to the empty context and takes the continuation counts of the first
//! context that was observed in training. Each shortening multiplies the
//! scores by the backoff factor; the result is renormalized, so a query is
//! always a proper distribution over the vocabulary.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::corpus::{tokenize, Corpus, TokenMode};
use crate::sampling::LogitSource;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_BACKOFF: f64 = 0.4;

const DUMP_MAGIC: &str = "domainsynth-ngram";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot fit a language model on an empty corpus")]
    EmptyCorpus,
    #[error("model order must be >= 1")]
    ZeroOrder,
    #[error("backoff factor must be in (0, 1], got {0}")]
    InvalidBackoff(f64),
    #[error("model dump line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    backoff: f64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `levels[l]` maps a context of length `l` to its continuation counts.
    levels: Vec<HashMap<Box<[u32]>, ContextCounts>>,
}

impl NgramModel {
    /// Fits on the metric-tokenized texts of `corpus`.
    pub fn fit(corpus: &Corpus, order: usize) -> Result<Self, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        Self::fit_texts(corpus.texts(), order)
    }

    /// Fits on arbitrary sentences, each tokenized with the metric tokenizer.
    pub fn fit_texts<'a>(texts: impl IntoIterator<Item = &'a str>, order: usize) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::ZeroOrder);
        }
        let mut model = Self::empty(order);
        let mut any = false;
        let mut padded = Vec::new();
        for text in texts {
            any = true;
            padded.clear();
            padded.resize(order - 1, BOS_ID);
            for tok in tokenize(text, TokenMode::Metric).into_inner() {
                let id = model.intern(tok);
                padded.push(id);
            }
            padded.push(EOS_ID);
            for pos in (order - 1)..padded.len() {
                let next = padded[pos];
                for len in 0..order {
                    let ctx: Box<[u32]> = padded[pos - len..pos].into();
                    let entry = model.levels[len].entry(ctx).or_default();
                    entry.total += 1;
                    *entry.next.entry(next).or_insert(0) += 1;
                }
            }
        }
        if !any {
            return Err(ModelError::EmptyCorpus);
        }
        Ok(model)
    }

    fn empty(order: usize) -> Self {
        let vocab: Vec<String> = [BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self {
            order,
            backoff: DEFAULT_BACKOFF,
            vocab,
            index,
            levels: vec![HashMap::new(); order],
        }
    }

    fn intern(&mut self, tok: String) -> u32 {
        if let Some(&id) = self.index.get(&tok) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.index.insert(tok.clone(), id);
        self.vocab.push(tok);
        id
    }

    pub fn with_backoff(mut self, backoff: f64) -> Result<Self, ModelError> {
        if !(backoff > 0.0 && backoff <= 1.0) {
            return Err(ModelError::InvalidBackoff(backoff));
        }
        self.backoff = backoff;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn backoff(&self) -> f64 {
        self.backoff
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token_id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Raw count of `next` following `context` (context length < order).
    pub fn count(&self, context: &[&str], next: &str) -> u64 {
        if context.len() >= self.order {
            return 0;
        }
        let ctx: Vec<u32> = context.iter().map(|t| self.token_id(t)).collect();
        self.levels[ctx.len()]
            .get(ctx.as_slice())
            .and_then(|c| c.next.get(&self.token_id(next)))
            .copied()
            .unwrap_or(0)
    }

    /// Next-token probabilities for `context`; unseen tokens map to UNK.
    pub fn next_token_probs(&self, context: &[String]) -> Vec<f64> {
        let ids: Vec<u32> = context.iter().map(|t| self.token_id(t)).collect();
        let max_len = (self.order - 1).min(ids.len());
        let mut weight = 1.0;
        let mut scores = vec![0.0; self.vocab.len()];
        for len in (0..=max_len).rev() {
            let ctx = &ids[ids.len() - len..];
            if let Some(counts) = self.levels[len].get(ctx) {
                if counts.total > 0 {
                    for (&tok, &c) in &counts.next {
                        scores[tok as usize] = weight * c as f64 / counts.total as f64;
                    }
                    break;
                }
            }
            weight *= self.backoff;
        }
        let z: f64 = scores.iter().sum();
        if z > 0.0 {
            scores.iter_mut().for_each(|s| *s /= z);
        } else {
            // nothing observed: uniform over every token that can follow
            let p = 1.0 / (self.vocab.len() - 1) as f64;
            scores.iter_mut().for_each(|s| *s = p);
        }
        scores[BOS_ID as usize] = 0.0;
        scores
    }

    /// Natural log of [`Self::next_token_probs`]; impossible tokens get `-inf`.
    pub fn next_token_logits(&self, context: &[String]) -> Vec<f64> {
        self.next_token_probs(context).into_iter().map(f64::ln).collect()
    }

    /// Line-based count dump. The layout is tied to `DUMP_VERSION` and is not
    /// stable across versions.
    ///
    /// ```text
    /// domainsynth-ngram 1 <order> <backoff>
    /// vocab <n>
    /// <token>            (n lines, in id order)
    /// <ctx ids, space separated>\t<next id>\t<count>
    /// ```
    pub fn write_counts(&self, mut w: impl Write) -> Result<(), ModelError> {
        writeln!(w, "{DUMP_MAGIC} {DUMP_VERSION} {} {}", self.order, self.backoff)?;
        writeln!(w, "vocab {}", self.vocab.len())?;
        for t in &self.vocab {
            writeln!(w, "{t}")?;
        }
        for level in &self.levels {
            let mut ctxs: Vec<_> = level.iter().collect();
            ctxs.sort_by(|a, b| a.0.cmp(b.0));
            for (ctx, counts) in ctxs {
                let ctx_str = ctx.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
                for (next, c) in &counts.next {
                    writeln!(w, "{ctx_str}\t{next}\t{c}")?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_counts(r: impl BufRead) -> Result<Self, ModelError> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, message: &str| ModelError::Malformed {
            line: line + 1,
            message: message.to_string(),
        };
        let (n, header) = lines.next().ok_or_else(|| bad(0, "empty dump"))?;
        let header = header?;
        let fields: Vec<_> = header.split(' ').collect();
        if fields.len() != 4 || fields[0] != DUMP_MAGIC {
            return Err(bad(n, "bad header"));
        }
        if fields[1].parse::<u32>().ok() != Some(DUMP_VERSION) {
            return Err(bad(n, "unsupported dump version"));
        }
        let order: usize = fields[2].parse().map_err(|_| bad(n, "bad order"))?;
        let backoff: f64 = fields[3].parse().map_err(|_| bad(n, "bad backoff"))?;
        if order == 0 {
            return Err(ModelError::ZeroOrder);
        }
        let (n, vocab_line) = lines.next().ok_or_else(|| bad(1, "missing vocab"))?;
        let vocab_len: usize = vocab_line?
            .strip_prefix("vocab ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(n, "bad vocab line"))?;
        let mut model = Self::empty(order).with_backoff(backoff)?;
        model.vocab.clear();
        model.index.clear();
        for _ in 0..vocab_len {
            let (_, tok) = lines.next().ok_or_else(|| bad(n, "truncated vocab"))?;
            model.intern(tok?);
        }
        if model.vocab.get(..3) != Some(&[BOS.to_string(), EOS.to_string(), UNK.to_string()][..]) {
            return Err(bad(n, "reserved tokens missing"));
        }
        for (n, line) in lines {
            let line = line?;
            let mut parts = line.split('\t');
            let (Some(ctx), Some(next), Some(count), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(n, "expected 3 tab-separated fields"));
            };
            let ctx: Vec<u32> = ctx
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(n, "bad context id"))?;
            let next: u32 = next.parse().map_err(|_| bad(n, "bad token id"))?;
            let count: u64 = count.parse().map_err(|_| bad(n, "bad count"))?;
            if ctx.len() >= order || next as usize >= vocab_len || ctx.iter().any(|&i| i as usize >= vocab_len) {
                return Err(bad(n, "count out of range"));
            }
            let entry = model.levels[ctx.len()].entry(ctx.into()).or_default();
            entry.total += count;
            *entry.next.entry(next).or_insert(0) += count;
        }
        Ok(model)
    }
}

impl LogitSource for NgramModel {
    type Error = std::convert::Infallible;

    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn eos_index(&self) -> usize {
        EOS_ID as usize
    }

    fn next_token_logits(&self, context: &[String]) -> Result<Vec<f64>, Self::Error> {
        Ok(NgramModel::next_token_logits(self, context))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Source, Utterance};
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            "t",
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Utterance::new(format!("{i}"), *t, "d", Source::Real).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn strings(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bigram_counts() {
        let m = NgramModel::fit(&corpus(&["a b"]), 2).unwrap();
        assert_eq!(m.count(&[BOS], "a"), 1);
        assert_eq!(m.count(&["a"], "b"), 1);
        assert_eq!(m.count(&["b"], EOS), 1);
        assert_eq!(m.count(&["a"], EOS), 0);
        assert_eq!(m.vocab(), strings(&[BOS, EOS, UNK, "a", "b"]));
    }

    #[test]
    fn order_one_is_unigram_with_eos() {
        let m = NgramModel::fit(&corpus(&["a b a"]), 1).unwrap();
        let p = m.next_token_probs(&strings(&["whatever", "b"]));
        // a:2 b:1 eos:1 over 4
        assert_eq!(p[m.token_id("a") as usize], 0.5);
        assert_eq!(p[m.token_id("b") as usize], 0.25);
        assert_eq!(p[EOS_ID as usize], 0.25);
        assert_eq!(p[BOS_ID as usize], 0.0);
        assert_eq!(p[UNK_ID as usize], 0.0);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            NgramModel::fit(&corpus(&["a"]), 0),
            Err(ModelError::ZeroOrder)
        ));
        assert!(matches!(
            NgramModel::fit(&Corpus::empty("e"), 2),
            Err(ModelError::EmptyCorpus)
        ));
    }

    #[test]
    fn seen_context_excludes_unseen_continuations() {
        let m = NgramModel::fit(&corpus(&["a b", "a c"]), 2).unwrap();
        let p = m.next_token_probs(&strings(&["a"]));
        assert_eq!(p[m.token_id("b") as usize], 0.5);
        assert_eq!(p[m.token_id("c") as usize], 0.5);
        let others: f64 = p.iter().sum::<f64>() - 1.0;
        assert!(others.abs() < 1e-12);
        assert_eq!(p[m.token_id("a") as usize], 0.0);
    }

    #[test]
    fn unseen_context_backs_off_to_unigram() {
        let m = NgramModel::fit(&corpus(&["a b", "a c"]), 3).unwrap();
        let p = m.next_token_probs(&strings(&["zzz", "qqq"]));
        // unigram continuations: a:2 b:1 c:1 eos:2 over 6
        assert!((p[m.token_id("a") as usize] - 2.0 / 6.0).abs() < 1e-12);
        assert!((p[EOS_ID as usize] - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(p[BOS_ID as usize], 0.0);
    }

    #[test]
    fn nothing_observed_is_uniform_without_bos() {
        let m = NgramModel::empty(2);
        let p = m.next_token_probs(&strings(&["x"]));
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn dump_roundtrip() {
        let m = NgramModel::fit(&corpus(&["the cat sat", "the dog sat down", "a cat"]), 3).unwrap();
        let mut buf = Vec::new();
        m.write_counts(&mut buf).unwrap();
        let back = NgramModel::read_counts(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(NgramModel::read_counts("nope".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn logits_form_a_distribution(
            texts in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a","b","c","d"]), 0..6), 1..8),
            ctx in prop::collection::vec(prop::sample::select(vec!["a","b","c","d","e","<s>"]), 0..5),
            order in 1usize..5,
        ) {
            let joined: Vec<String> = texts.iter().map(|t| t.join(" ")).collect();
            let m = NgramModel::fit_texts(joined.iter().map(String::as_str), order).unwrap();
            let ctx = strings(&ctx);
            let logits = m.next_token_logits(&ctx);
            let sum: f64 = logits.iter().map(|l| l.exp()).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert_eq!(logits[BOS_ID as usize], f64::NEG_INFINITY);
        }

        #[test]
        fn fit_commutes_with_permutation(
            texts in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a","b","c"]), 1..5), 1..8),
            order in 1usize..4,
        ) {
            let joined: Vec<String> = texts.iter().map(|t| t.join(" ")).collect();
            let a = NgramModel::fit_texts(joined.iter().map(String::as_str), order).unwrap();
            let b = NgramModel::fit_texts(joined.iter().rev().map(String::as_str), order).unwrap();
            let toks = ["a", "b", "c", BOS, EOS];
            for ctx in [vec![], vec!["a"], vec!["b", "c"], vec![BOS, BOS], vec![BOS, "a"]] {
                if ctx.len() < order {
                    for next in toks {
                        prop_assert_eq!(a.count(&ctx, next), b.count(&ctx, next));
                    }
                }
                let ctx = strings(&ctx);
                let pa = a.next_token_probs(&ctx);
                let pb = b.next_token_probs(&ctx);
                for tok in toks {
                    prop_assert!((pa[a.token_id(tok) as usize] - pb[b.token_id(tok) as usize]).abs() < 1e-12);
                }
            }
        }
    }
}
