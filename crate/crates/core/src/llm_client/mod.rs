//! Completion service client, corpus generation and a mock service.
//!
//! Wire protocol: `POST /v1/complete` with a JSON [`CompletionRequest`] body,
//! answered by a JSON [`CompletionResponse`]. Field names are snake_case.

mod http;
pub mod mock;

use std::future::Future;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus, CorpusError, Source, TokenMode, Utterance};
use crate::prompting::{build_prompt, sentence_seed, PromptError, PromptStrategy};
use crate::sampling::{generate_sentence, SamplingConfig, SamplingError, StopReason};
use crate::toylm::NgramModel;

pub use http::{HttpClient, RetryPolicy, BEARER_TOKEN_ENV};

/// Blank completions are re-requested this many times before the sentence is skipped.
pub const BLANK_RETRIES: u32 = 3;
/// Generation aborts when more than this fraction of sentences fail.
pub const MAX_FAILED_FRACTION: f64 = 0.20;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("server returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("generation aborted: {failed} of {total} sentences failed ({} completed)", partial.len())]
    Aborted {
        failed: usize,
        total: usize,
        partial: Box<Corpus>,
    },
    #[error("n and max_in_flight must both be >= 1")]
    InvalidGeneration,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl ClientError {
    /// Network failures, timeouts and transient HTTP statuses.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) | ClientError::Timeout => true,
            ClientError::Status { status, .. } => matches!(status, 408 | 429 | 502 | 503 | 504),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub typical_tau: f64,
    pub repetition_penalty: f64,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_stop")]
    pub stop: Vec<String>,
}

fn default_stop() -> Vec<String> {
    vec!["\n".to_string()]
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, cfg: &SamplingConfig) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: cfg.max_tokens(),
            typical_tau: cfg.typical_tau(),
            repetition_penalty: cfg.repetition_penalty(),
            temperature: cfg.temperature(),
            seed: Some(cfg.seed()),
            stop: default_stop(),
        }
    }

    /// The request's decoding parameters as a validated config.
    pub fn sampling_config(&self) -> Result<SamplingConfig, SamplingError> {
        SamplingConfig::new(
            self.typical_tau,
            self.repetition_penalty,
            self.temperature,
            self.max_tokens,
            self.seed.unwrap_or(0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

/// Truncates `text` at the earliest stop string. Returns whether one was found.
pub fn apply_stop(text: &mut String, stop: &[String]) -> bool {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min();
    match cut {
        Some(at) => {
            text.truncate(at);
            true
        }
        None => false,
    }
}

/// Something that answers completion requests.
#[allow(async_fn_in_trait)]
pub trait CompletionBackend {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        (**self).complete(req).await
    }
}

/// In-process completion backend over the n-gram model. The mock server
/// answers through exactly this path, so both give identical text.
#[derive(Debug, Clone)]
pub struct ToyLmBackend {
    model: NgramModel,
}

impl ToyLmBackend {
    pub fn new(model: NgramModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    /// The prompt is tokenized with the metric tokenizer and used as context.
    pub fn respond(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        let cfg = req
            .sampling_config()
            .map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
        let context = tokenize(&req.prompt, TokenMode::Metric);
        let (tokens, why) =
            generate_sentence(&self.model, &context, &cfg).map_err(|e| ClientError::Backend(e.to_string()))?;
        let mut text = String::new();
        for t in tokens.iter() {
            text.push(' ');
            text.push_str(t);
        }
        let stopped = apply_stop(&mut text, &req.stop);
        let finish_reason = if stopped || why == StopReason::Eos {
            FinishReason::Stop
        } else {
            FinishReason::Length
        };
        Ok(CompletionResponse { text, finish_reason })
    }
}

impl CompletionBackend for ToyLmBackend {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        self.respond(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceStatus {
    Ok,
    Skipped,
    Failed,
}

/// Per-sentence generation log entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub index: usize,
    pub seed: u64,
    pub demonstration_ids: Vec<String>,
    pub attempts: u32,
    pub status: SentenceStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub corpus: Corpus,
    pub records: Vec<SentenceRecord>,
    pub skipped: usize,
    pub failed: usize,
}

/// Seed for the `attempt`-th re-request of a blank completion.
fn blank_retry_seed(seed: u64, attempt: u32) -> u64 {
    seed.wrapping_add(u64::from(attempt).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

async fn generate_one<B: CompletionBackend>(
    backend: &B,
    strategy: PromptStrategy,
    target_domain: &str,
    source: &Corpus,
    cfg: &SamplingConfig,
    index: usize,
) -> Result<(SentenceRecord, Option<String>), ClientError> {
    let seed = sentence_seed(cfg.seed(), index as u64);
    let prompt = build_prompt(strategy, target_domain, source, seed)?;
    let mut record = SentenceRecord {
        index,
        seed,
        demonstration_ids: prompt.demonstration_ids,
        attempts: 0,
        status: SentenceStatus::Skipped,
        error: None,
    };
    let mut req = CompletionRequest::new(prompt.text, &cfg.with_seed(seed));
    for attempt in 0..=BLANK_RETRIES {
        req.seed = Some(blank_retry_seed(seed, attempt));
        record.attempts = attempt + 1;
        match backend.complete(&req).await {
            Ok(resp) => {
                let text = resp.text.trim();
                if !text.is_empty() {
                    record.status = SentenceStatus::Ok;
                    return Ok((record, Some(text.to_string())));
                }
            }
            Err(e) => {
                record.status = SentenceStatus::Failed;
                record.error = Some(e.to_string());
                return Ok((record, None));
            }
        }
    }
    Ok((record, None))
}

/// Generates `n` synthetic utterances for `target_domain`.
///
/// Sentence `i` uses seed `cfg.seed ^ i` for both its demonstrations and its
/// decoding, and at most `max_in_flight` requests are outstanding at once.
/// Output order follows the request index no matter how requests complete.
pub async fn generate_corpus<B: CompletionBackend>(
    backend: &B,
    strategy: PromptStrategy,
    target_domain: &str,
    source: &Corpus,
    n: usize,
    cfg: &SamplingConfig,
    max_in_flight: usize,
) -> Result<Generation, ClientError> {
    if n == 0 || max_in_flight == 0 {
        return Err(ClientError::InvalidGeneration);
    }
    let target = crate::corpus::normalize_domain(target_domain);
    let mut results = stream::iter(0..n)
        .map(|i| generate_one(backend, strategy, &target, source, cfg, i))
        .buffered(max_in_flight);

    let mut utterances = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let (mut skipped, mut failed) = (0, 0);
    while let Some(res) = results.next().await {
        let (record, text) = res?;
        match record.status {
            SentenceStatus::Ok => {
                let text = text.expect("ok sentences carry text");
                utterances.push(Utterance::new(
                    format!("{target}-syn-{:06}", record.index),
                    text,
                    &target,
                    Source::Synthetic,
                )?);
            }
            SentenceStatus::Skipped => skipped += 1,
            SentenceStatus::Failed => failed += 1,
        }
        records.push(record);
        if failed as f64 > MAX_FAILED_FRACTION * n as f64 {
            return Err(ClientError::Aborted {
                failed,
                total: n,
                partial: Box::new(Corpus::new(format!("synthetic-{target}"), utterances)?),
            });
        }
    }
    if skipped > 0 {
        tracing::warn!(skipped, "blank completions skipped after {BLANK_RETRIES} retries");
    }
    if failed > 0 {
        tracing::warn!(failed, "sentences failed");
    }
    Ok(Generation {
        corpus: Corpus::new(format!("synthetic-{target}"), utterances)?,
        records,
        skipped,
        failed,
    })
}

/// Runs a future to completion on a fresh current-thread runtime.
pub fn block_on<F: Future>(fut: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
        .block_on(fut)
}
