//! JSON run configuration and its merge with command-line flags.
//!
//! Precedence is flag, then config file, then built-in default. Relative
//! paths in a config file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use domainsynth::corpus::{load_corpus, Corpus};
use domainsynth::mixer::SweepAxis;
use domainsynth::prompting::{PromptStrategy, StrategyKind};
use domainsynth::sampling::SamplingConfig;
use serde::Deserialize;

pub const BUILTIN_ENDPOINT: &str = "builtin-toylm";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub reference_domain: Option<String>,
    pub synthetic: Option<PathBuf>,
    pub real: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub baseline_pairs: Option<PathBuf>,
    pub target_domain: Option<String>,
    pub endpoint: Option<String>,
    pub strategy: Option<StrategyKind>,
    pub num_demonstrations: Option<usize>,
    pub num_sentences: Option<usize>,
    pub toylm_order: Option<usize>,
    pub timeout_secs: Option<f64>,
    #[serde(default)]
    pub sampling: SamplingFile,
    #[serde(default)]
    pub mix: MixFile,
    #[serde(default)]
    pub sweep: SweepFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingFile {
    pub typical_tau: Option<f64>,
    pub repetition_penalty: Option<f64>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixFile {
    pub real_fraction: Option<f64>,
    pub dedup: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub axis: Option<SweepAxis>,
    pub points: Option<Vec<usize>>,
    pub repeats: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.out_dir,
            &mut cfg.source,
            &mut cfg.reference,
            &mut cfg.synthetic,
            &mut cfg.real,
            &mut cfg.pairs,
            &mut cfg.baseline_pairs,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by every command, after merging.
#[derive(Debug, Clone)]
pub struct Common {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Common {
    pub fn resolve(
        seed: Option<u64>,
        jobs: Option<usize>,
        out_dir: Option<PathBuf>,
        file: &FileConfig,
    ) -> anyhow::Result<Self> {
        let jobs = jobs
            .or(file.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        // a second build fails harmlessly when the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        Ok(Self {
            seed: seed.or(file.seed).unwrap_or(0),
            jobs,
            out_dir: out_dir
                .or_else(|| file.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    pub fn output(&self, name: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("cannot create output directory {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SamplingArgs {
    /// Typical-decoding mass tau in (0, 1].
    #[arg(long)]
    pub typical_tau: Option<f64>,
    /// Repetition penalty theta (>= 1).
    #[arg(long)]
    pub repetition_penalty: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Maximum generated tokens per sentence.
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

impl SamplingArgs {
    pub fn resolve(&self, file: &SamplingFile, seed: u64) -> anyhow::Result<SamplingConfig> {
        let d = SamplingConfig::default();
        SamplingConfig::new(
            self.typical_tau.or(file.typical_tau).unwrap_or(d.typical_tau()),
            self.repetition_penalty
                .or(file.repetition_penalty)
                .unwrap_or(d.repetition_penalty()),
            self.temperature.or(file.temperature).unwrap_or(d.temperature()),
            self.max_tokens.or(file.max_tokens).unwrap_or(d.max_tokens()),
            seed,
        )
        .context("invalid sampling parameters")
    }
}

/// Demonstration count defaults to 3 for strategies that take demonstrations.
pub fn resolve_strategy(kind: StrategyKind, k: Option<usize>) -> anyhow::Result<PromptStrategy> {
    let k = k.unwrap_or(if kind.uses_demonstrations() { 3 } else { 0 });
    PromptStrategy::new(kind, k).context("invalid prompting strategy")
}

/// First of `cli` and `file`, or an error naming the flag.
pub fn require<T: Clone>(cli: Option<T>, file: &Option<T>, flag: &str) -> anyhow::Result<T> {
    match cli.or_else(|| file.clone()) {
        Some(v) => Ok(v),
        None => bail!(
            "missing required --{flag} (or `{}` in the config file)",
            flag.replace('-', "_")
        ),
    }
}

pub fn load(path: &Path) -> anyhow::Result<Corpus> {
    if !path.exists() {
        bail!("file not found: {}", path.display());
    }
    load_corpus(path).with_context(|| format!("cannot load corpus {}", path.display()))
}

/// Keeps only `domain` (normalized); an empty result is an error.
pub fn restrict_domain(corpus: Corpus, domain: Option<&str>) -> anyhow::Result<Corpus> {
    let Some(domain) = domain else { return Ok(corpus) };
    let sub = corpus.filter_domain(domain);
    if sub.is_empty() {
        bail!(
            "domain {domain:?} not found in {} (available: {})",
            corpus.name(),
            corpus.domains().join(", ")
        );
    }
    Ok(sub)
}

pub fn endpoint_is_builtin(endpoint: &str) -> bool {
    endpoint == BUILTIN_ENDPOINT
}
