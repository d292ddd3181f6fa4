//! Decoding stack: temperature, CTRL-style repetition penalty, locally typical
//! filtering and seeded categorical sampling, plus the sentence loop that ties
//! them together over any [`LogitSource`].

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenSeq;

/// Slack allowed when comparing accumulated probability mass against `tau`.
pub const MASS_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("repetition penalty must be >= 1, got {0}")]
    InvalidPenalty(f64),
    #[error("temperature must be > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("typical tau must be in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("logit source returned {got} logits for a vocabulary of {expected}")]
    LogitLength { expected: usize, got: usize },
    #[error("logit source failed: {0}")]
    Source(#[source] Box<dyn std::error::Error + Send + Sync>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSamplingConfig", into = "RawSamplingConfig")]
pub struct SamplingConfig {
    typical_tau: f64,
    repetition_penalty: f64,
    temperature: f64,
    max_tokens: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct RawSamplingConfig {
    typical_tau: f64,
    repetition_penalty: f64,
    temperature: f64,
    max_tokens: usize,
    seed: u64,
}

impl Default for RawSamplingConfig {
    fn default() -> Self {
        SamplingConfig::default().into()
    }
}

impl TryFrom<RawSamplingConfig> for SamplingConfig {
    type Error = SamplingError;

    fn try_from(r: RawSamplingConfig) -> Result<Self, Self::Error> {
        SamplingConfig::new(r.typical_tau, r.repetition_penalty, r.temperature, r.max_tokens, r.seed)
    }
}

impl From<SamplingConfig> for RawSamplingConfig {
    fn from(c: SamplingConfig) -> Self {
        RawSamplingConfig {
            typical_tau: c.typical_tau,
            repetition_penalty: c.repetition_penalty,
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            seed: c.seed,
        }
    }
}

impl Default for SamplingConfig {
    /// Typical decoding with tau 0.9 and repetition penalty 1.1.
    fn default() -> Self {
        Self {
            typical_tau: 0.9,
            repetition_penalty: 1.1,
            temperature: 1.0,
            max_tokens: 48,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn new(
        typical_tau: f64,
        repetition_penalty: f64,
        temperature: f64,
        max_tokens: usize,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        if !(typical_tau > 0.0 && typical_tau <= 1.0) {
            return Err(SamplingError::InvalidTau(typical_tau));
        }
        if !(repetition_penalty >= 1.0 && repetition_penalty.is_finite()) {
            return Err(SamplingError::InvalidPenalty(repetition_penalty));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(SamplingError::InvalidTemperature(temperature));
        }
        if max_tokens == 0 {
            return Err(SamplingError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        Ok(Self {
            typical_tau,
            repetition_penalty,
            temperature,
            max_tokens,
            seed,
        })
    }

    pub fn typical_tau(&self) -> f64 {
        self.typical_tau
    }

    pub fn repetition_penalty(&self) -> f64 {
        self.repetition_penalty
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_max_tokens(self, max_tokens: usize) -> Result<Self, SamplingError> {
        Self::new(
            self.typical_tau,
            self.repetition_penalty,
            self.temperature,
            max_tokens,
            self.seed,
        )
    }
}

/// Probability vector aligned to a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution(Vec<f64>);

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, SamplingError> {
        if probs.is_empty() {
            return Err(SamplingError::InvalidDistribution("empty".into()));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(SamplingError::InvalidDistribution(format!("entry {i} is {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SamplingError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn softmax(logits: &[f64]) -> Result<TokenDistribution, SamplingError> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SamplingError::InvalidDistribution(
            "no finite logit to normalize".into(),
        ));
    }
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    TokenDistribution::new(exps.into_iter().map(|e| e / z).collect())
}

/// Divides positive logits of context tokens by `theta` and multiplies the
/// non-positive ones by it.
pub fn apply_repetition_penalty(
    logits: &[f64],
    context_token_indices: &BTreeSet<usize>,
    theta: f64,
) -> Result<Vec<f64>, SamplingError> {
    if theta.is_nan() || theta < 1.0 {
        return Err(SamplingError::InvalidPenalty(theta));
    }
    let mut out = logits.to_vec();
    for &i in context_token_indices {
        if let Some(l) = out.get_mut(i) {
            *l = if *l > 0.0 { *l / theta } else { *l * theta };
        }
    }
    Ok(out)
}

pub fn apply_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>, SamplingError> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(SamplingError::InvalidTemperature(temperature));
    }
    Ok(logits.iter().map(|l| l / temperature).collect())
}

/// Locally typical filtering.
///
/// Tokens are ranked by `|-ln p - H|` where `H` is the entropy in nats,
/// ties going to higher probability and then to lower index. The shortest
/// prefix of that ranking whose mass reaches `tau` is kept and renormalized.
/// Zero-probability tokens are never kept.
pub fn typical_filter(dist: &TokenDistribution, tau: f64) -> Result<TokenDistribution, SamplingError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(SamplingError::InvalidTau(tau));
    }
    let kept = typical_set(dist.probs(), tau);
    let mass: f64 = kept.iter().map(|&i| dist.0[i]).sum();
    let mut out = vec![0.0; dist.len()];
    for &i in &kept {
        out[i] = dist.0[i] / mass;
    }
    Ok(TokenDistribution(out))
}

/// Indices kept by [`typical_filter`], in ranking order.
pub fn typical_set(probs: &[f64], tau: f64) -> Vec<usize> {
    let entropy: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    let mut ranked: Vec<(usize, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i, (-p.ln() - entropy).abs()))
        .collect();
    ranked.sort_by(|&(ia, sa), &(ib, sb)| {
        sa.total_cmp(&sb)
            .then_with(|| probs[ib].total_cmp(&probs[ia]))
            .then_with(|| ia.cmp(&ib))
    });
    let mut cum = 0.0;
    let mut kept = Vec::new();
    for (i, _) in ranked {
        kept.push(i);
        cum += probs[i];
        if cum >= tau - MASS_EPSILON {
            break;
        }
    }
    kept
}

/// Inverse-CDF draw in index order.
pub fn sample_token<R: Rng + ?Sized>(dist: &TokenDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in dist.0.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_nonzero = i;
            if u < cum {
                return i;
            }
        }
    }
    last_nonzero
}

/// Anything that yields next-token logits over a fixed vocabulary.
pub trait LogitSource {
    type Error: std::error::Error + Send + Sync + 'static;

    fn vocab(&self) -> &[String];

    fn eos_index(&self) -> usize;

    fn next_token_logits(&self, context: &[String]) -> Result<Vec<f64>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Eos,
    Length,
}

/// Generates one sentence continuing `prompt_context`. The repetition penalty
/// only covers tokens generated in this call, not the prompt. EOS is not
/// included in the result.
pub fn generate_sentence<S: LogitSource + ?Sized>(
    source: &S,
    prompt_context: &TokenSeq,
    cfg: &SamplingConfig,
) -> Result<(TokenSeq, StopReason), SamplingError> {
    let vocab_len = source.vocab().len();
    let eos = source.eos_index();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut context: Vec<String> = prompt_context.to_vec();
    let mut generated = Vec::new();
    let mut seen = BTreeSet::new();
    for _ in 0..cfg.max_tokens {
        let logits = source
            .next_token_logits(&context)
            .map_err(|e| SamplingError::Source(Box::new(e)))?;
        if logits.len() != vocab_len {
            return Err(SamplingError::LogitLength {
                expected: vocab_len,
                got: logits.len(),
            });
        }
        let logits = apply_temperature(&logits, cfg.temperature)?;
        let logits = apply_repetition_penalty(&logits, &seen, cfg.repetition_penalty)?;
        let dist = typical_filter(&softmax(&logits)?, cfg.typical_tau)?;
        let next = sample_token(&dist, &mut rng);
        if next == eos {
            return Ok((
                TokenSeq::new(generated).map_err(|e| SamplingError::Source(Box::new(e)))?,
                StopReason::Eos,
            ));
        }
        let tok = source.vocab()[next].clone();
        seen.insert(next);
        context.push(tok.clone());
        generated.push(tok);
    }
    let seq = TokenSeq::new(generated).map_err(|e| SamplingError::Source(Box::new(e)))?;
    Ok((seq, StopReason::Length))
}
