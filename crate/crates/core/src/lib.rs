//! Text-side tooling for zero-shot domain adaptation of speech recognisers.
//!
//! The crate covers the whole text half of the synthesis pipeline:
//!
//! * [`corpus`]: labeled utterances, tokenization and the leave-one-domain-out split.
//! * [`prompting`]: naive / demonstration / instruction / ICIF prompt assembly and
//!   the instruction-finetuning dataset.
//! * [`toylm`]: a small backoff n-gram model so everything runs offline.
//! * [`sampling`]: temperature, repetition penalty, locally typical filtering and
//!   the sentence generation loop.
//! * [`llm_client`]: HTTP completion client, corpus generation with bounded
//!   concurrency and a mock server backed by the toy model.
//! * [`metrics`]: Distinct-n, Self-BLEU and Jensen-Shannon divergence.
//! * [`wer`]: Levenshtein alignment, pooled WER and cross-domain aggregation.
//! * [`mixer`]: adaptation dataset mixing and sweep planning.

pub mod corpus;
pub mod llm_client;
pub mod metrics;
pub mod mixer;
pub mod prompting;
pub mod sampling;
pub mod toylm;
pub mod wer;

pub use corpus::{
    leave_one_domain_out, tokenize, unigram_distribution, Corpus, CorpusError, DomainSplit, Source, TokenMode,
    TokenSeq, UnigramDistribution, Utterance,
};
pub use llm_client::{
    generate_corpus, ClientError, CompletionBackend, CompletionRequest, CompletionResponse, FinishReason, HttpClient,
    ToyLmBackend,
};
pub use metrics::{profile_corpus, CorpusProfile, MetricError};
pub use mixer::{mix, plan_sweep, MixSpec, RunConfig, SweepAxis, SweepPlan};
pub use prompting::{build_prompt, format_instruction, Prompt, PromptError, PromptStrategy, StrategyKind};
pub use sampling::{SamplingConfig, SamplingError, TokenDistribution};
pub use toylm::NgramModel;
pub use wer::{align, cross_domain_report, relative_reduction, Alignment, DomainResult, WerError};
