//! Prompt assembly for the four synthesis strategies and the instruction
//! dataset used to finetune the completion model.
//!
//! Every prompt ends with the bare target instruction
//! `Please generate a sentence related to {domain}:`. Demonstration strategies
//! prepend `k` formatted source instructions, one per line.

use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Utterance};

pub const INSTRUCTION_PREFIX: &str = "Please generate a sentence related to";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{kind} prompting requires at least one demonstration")]
    MissingDemonstrations { kind: StrategyKind },
    #[error("{kind} prompting takes no demonstrations (got {k})")]
    UnexpectedDemonstrations { kind: StrategyKind, k: usize },
    #[error("cannot sample {requested} demonstrations from a corpus of {available}")]
    NotEnoughDemonstrations { requested: usize, available: usize },
    #[error("cannot build an instruction dataset from an empty corpus")]
    EmptyCorpus,
    #[error("instruction record on line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Bare target instruction to a pretrained model.
    Naive,
    /// Demonstrations prepended, pretrained model.
    Icl,
    /// Bare target instruction to an instruction-finetuned model.
    InstructOnly,
    /// Demonstrations prepended, instruction-finetuned model.
    Icif,
}

impl StrategyKind {
    pub fn uses_demonstrations(self) -> bool {
        matches!(self, StrategyKind::Icl | StrategyKind::Icif)
    }

    /// Whether the strategy expects a model finetuned on the instruction dataset.
    pub fn instruction_tuned(self) -> bool {
        matches!(self, StrategyKind::InstructOnly | StrategyKind::Icif)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Naive => "naive",
            StrategyKind::Icl => "icl",
            StrategyKind::InstructOnly => "instruct_only",
            StrategyKind::Icif => "icif",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "naive" | "pd" => Ok(StrategyKind::Naive),
            "icl" => Ok(StrategyKind::Icl),
            "instruct_only" | "if" => Ok(StrategyKind::InstructOnly),
            "icif" => Ok(StrategyKind::Icif),
            other => Err(format!(
                "unknown strategy {other:?} (expected naive, icl, instruct_only or icif)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStrategy", into = "RawStrategy")]
pub struct PromptStrategy {
    kind: StrategyKind,
    num_demonstrations: usize,
}

#[derive(Serialize, Deserialize)]
struct RawStrategy {
    kind: StrategyKind,
    #[serde(default)]
    num_demonstrations: usize,
}

impl TryFrom<RawStrategy> for PromptStrategy {
    type Error = PromptError;

    fn try_from(raw: RawStrategy) -> Result<Self, Self::Error> {
        PromptStrategy::new(raw.kind, raw.num_demonstrations)
    }
}

impl From<PromptStrategy> for RawStrategy {
    fn from(s: PromptStrategy) -> Self {
        RawStrategy {
            kind: s.kind,
            num_demonstrations: s.num_demonstrations,
        }
    }
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind, num_demonstrations: usize) -> Result<Self, PromptError> {
        match (kind.uses_demonstrations(), num_demonstrations) {
            (true, 0) => Err(PromptError::MissingDemonstrations { kind }),
            (false, k) if k > 0 => Err(PromptError::UnexpectedDemonstrations { kind, k }),
            _ => Ok(Self {
                kind,
                num_demonstrations,
            }),
        }
    }

    pub fn naive() -> Self {
        Self {
            kind: StrategyKind::Naive,
            num_demonstrations: 0,
        }
    }

    pub fn instruct_only() -> Self {
        Self {
            kind: StrategyKind::InstructOnly,
            num_demonstrations: 0,
        }
    }

    pub fn icl(k: usize) -> Result<Self, PromptError> {
        Self::new(StrategyKind::Icl, k)
    }

    pub fn icif(k: usize) -> Result<Self, PromptError> {
        Self::new(StrategyKind::Icif, k)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn num_demonstrations(&self) -> usize {
        self.num_demonstrations
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub target_domain: String,
    pub demonstration_ids: Vec<String>,
}

/// `Please generate a sentence related to {domain}:`
pub fn target_instruction(domain: &str) -> String {
    format!("{INSTRUCTION_PREFIX} {domain}:")
}

/// `Please generate a sentence related to {domain}: {text}`, text verbatim.
pub fn format_instruction(utt: &Utterance) -> String {
    format!("{INSTRUCTION_PREFIX} {}: {}", utt.domain, utt.text)
}

/// Uniform sample of `k` distinct utterances without replacement, in random order.
pub fn sample_demonstrations(source: &Corpus, k: usize, rng_seed: u64) -> Result<Vec<&Utterance>, PromptError> {
    if k > source.len() {
        return Err(PromptError::NotEnoughDemonstrations {
            requested: k,
            available: source.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let utts = source.utterances();
    Ok(rand::seq::index::sample(&mut rng, utts.len(), k)
        .into_iter()
        .map(|i| &utts[i])
        .collect())
}

pub fn build_prompt(
    strategy: PromptStrategy,
    target_domain: &str,
    source: &Corpus,
    rng_seed: u64,
) -> Result<Prompt, PromptError> {
    let target_domain = crate::corpus::normalize_domain(target_domain);
    let instruction = target_instruction(&target_domain);
    if !strategy.kind.uses_demonstrations() {
        return Ok(Prompt {
            text: instruction,
            target_domain,
            demonstration_ids: Vec::new(),
        });
    }
    let demos = sample_demonstrations(source, strategy.num_demonstrations, rng_seed)?;
    let mut text = String::new();
    for d in &demos {
        text.push_str(&format_instruction(d));
        text.push('\n');
    }
    text.push_str(&instruction);
    Ok(Prompt {
        text,
        target_domain,
        demonstration_ids: demos.iter().map(|d| d.id.clone()).collect(),
    })
}

/// Seed used for sentence `index` of a run seeded with `base_seed`.
pub fn sentence_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub prompt: String,
    pub completion: String,
}

pub fn build_instruction_dataset(source: &Corpus) -> Result<Vec<InstructionRecord>, PromptError> {
    if source.is_empty() {
        return Err(PromptError::EmptyCorpus);
    }
    Ok(source
        .iter()
        .map(|u| InstructionRecord {
            prompt: target_instruction(&u.domain),
            completion: format!(" {}", u.text),
        })
        .collect())
}

pub fn write_instruction_dataset(records: &[InstructionRecord], mut writer: impl Write) -> Result<(), PromptError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_instruction_dataset(reader: impl BufRead) -> Result<Vec<InstructionRecord>, PromptError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PromptError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
