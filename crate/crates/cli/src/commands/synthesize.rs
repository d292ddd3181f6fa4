use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Args;
use domainsynth::corpus::{leave_one_domain_out, normalize_domain, save_corpus, Corpus};
use domainsynth::llm_client::{
    generate_corpus, ClientError, CompletionBackend, CompletionRequest, CompletionResponse, Generation, HttpClient,
    SentenceRecord, ToyLmBackend,
};
use domainsynth::prompting::{format_instruction, PromptStrategy, StrategyKind};
use domainsynth::sampling::SamplingConfig;
use domainsynth::toylm::{NgramModel, DEFAULT_ORDER};
use serde::Serialize;

use crate::config::{
    endpoint_is_builtin, load, require, resolve_strategy, Common, FileConfig, SamplingArgs, BUILTIN_ENDPOINT,
};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct SynthesizeArgs {
    /// Real source corpus (JSONL); demonstrations and builtin-model training text.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target domain name.
    #[arg(long)]
    pub target: Option<String>,
    /// naive, icl, instruct_only or icif.
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Demonstrations per prompt (icl and icif).
    #[arg(long = "demos")]
    pub num_demonstrations: Option<usize>,
    /// Number of sentences to request.
    #[arg(short, long)]
    pub n: Option<usize>,
    /// Completion service URL, or `builtin-toylm` for the in-process n-gram model.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// n-gram order of the builtin model.
    #[arg(long)]
    pub order: Option<usize>,
    /// Per-request timeout in seconds for remote endpoints.
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

pub(crate) enum Backend {
    Toy(ToyLmBackend),
    Http(HttpClient),
}

impl CompletionBackend for Backend {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        match self {
            Backend::Toy(b) => b.complete(req).await,
            Backend::Http(c) => c.complete(req).await,
        }
    }
}

impl Backend {
    /// Instruction-tuned strategies get a model fit on instruction-formatted
    /// lines, the others one fit on plain text.
    pub(crate) fn builtin(source: &Corpus, kind: StrategyKind, order: usize) -> anyhow::Result<Self> {
        if source.is_empty() {
            bail!("the builtin model needs a non-empty source corpus (--source)");
        }
        let model = if kind.instruction_tuned() {
            let lines: Vec<String> = source.iter().map(format_instruction).collect();
            NgramModel::fit_texts(lines.iter().map(String::as_str), order)
        } else {
            NgramModel::fit(source, order)
        }
        .context("cannot fit the builtin model")?;
        Ok(Backend::Toy(ToyLmBackend::new(model)))
    }

    pub(crate) fn remote(endpoint: &str, timeout_secs: f64) -> anyhow::Result<Self> {
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            bail!("--timeout-secs must be positive");
        }
        let client = HttpClient::new(endpoint, Duration::from_secs_f64(timeout_secs))
            .with_context(|| format!("invalid endpoint {endpoint}"))?;
        Ok(Backend::Http(client.with_env_bearer()))
    }
}

/// Source corpus with the target domain held out, and whether anything was removed.
pub(crate) fn hold_out_target(source: Option<Corpus>, target: &str) -> anyhow::Result<(Corpus, bool)> {
    let Some(source) = source else {
        return Ok((Corpus::empty("none"), false));
    };
    if source.domains().iter().any(|d| *d == normalize_domain(target)) {
        let split = leave_one_domain_out(&source, target)?;
        tracing::info!(
            target = split.target_domain,
            held_out = split.target_test.len(),
            "target domain removed from the source corpus"
        );
        Ok((split.source_train, true))
    } else {
        Ok((source, false))
    }
}

pub(crate) fn generate(
    backend: &Backend,
    strategy: PromptStrategy,
    target: &str,
    source: &Corpus,
    n: usize,
    sampling: &SamplingConfig,
    jobs: usize,
) -> Result<Generation, ClientError> {
    match backend {
        // in-process model: no I/O to overlap
        Backend::Toy(_) => {
            domainsynth::llm_client::block_on(generate_corpus(backend, strategy, target, source, n, sampling, jobs))
        }
        Backend::Http(_) => {
            let rt = super::runtime(jobs).map_err(|e| ClientError::Backend(e.to_string()))?;
            rt.block_on(generate_corpus(backend, strategy, target, source, n, sampling, jobs))
        }
    }
}

#[derive(Serialize)]
struct Params<'a> {
    target_domain: &'a str,
    strategy: PromptStrategy,
    num_sentences: usize,
    endpoint: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    toylm_order: Option<usize>,
    sampling: SamplingConfig,
    target_held_out: bool,
}

#[derive(Serialize)]
struct Summary {
    source_utterances: usize,
    generated: usize,
    skipped: usize,
    failed: usize,
    demonstrations_per_prompt: Option<usize>,
}

fn write_log(path: &std::path::Path, records: &[SentenceRecord]) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: SynthesizeArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    let target = normalize_domain(&require(args.target, &file.target_domain, "target")?);
    if target.is_empty() {
        bail!("--target must not be empty");
    }
    let kind = args.strategy.or(file.strategy).unwrap_or(StrategyKind::Icif);
    let strategy = resolve_strategy(kind, args.num_demonstrations.or(file.num_demonstrations))?;
    let n = args.n.or(file.num_sentences).unwrap_or(100);
    if n == 0 {
        bail!("-n must be at least 1");
    }
    let endpoint = args
        .endpoint
        .or_else(|| file.endpoint.clone())
        .unwrap_or_else(|| BUILTIN_ENDPOINT.to_string());
    let builtin = endpoint_is_builtin(&endpoint);
    let sampling = args.sampling.resolve(&file.sampling, common.seed)?;
    let order = args.order.or(file.toylm_order).unwrap_or(DEFAULT_ORDER);

    let source_path = args.source.or_else(|| file.source.clone());
    if source_path.is_none() && (strategy.kind().uses_demonstrations() || builtin) {
        bail!(
            "strategy {} with endpoint {endpoint} needs a source corpus (--source)",
            strategy.kind()
        );
    }
    let source = source_path.as_deref().map(load).transpose()?;
    let (train, held_out) = hold_out_target(source, &target)?;

    let backend = if builtin {
        Backend::builtin(&train, strategy.kind(), order)?
    } else {
        Backend::remote(&endpoint, args.timeout_secs.or(file.timeout_secs).unwrap_or(30.0))?
    };

    let params = Params {
        target_domain: &target,
        strategy,
        num_sentences: n,
        endpoint: &endpoint,
        toylm_order: builtin.then_some(order),
        sampling,
        target_held_out: held_out,
    };
    let mut manifest = Manifest::new("synthesize", common.seed, &params)?;
    if let Some(p) = &source_path {
        manifest.input("source", p)?;
    }

    tracing::info!(%target, strategy = %strategy.kind(), k = strategy.num_demonstrations(), n, %endpoint, "generating");
    let generation = match generate(&backend, strategy, &target, &train, n, &sampling, common.jobs) {
        Ok(g) => g,
        Err(ClientError::Aborted { failed, total, partial }) => {
            let path = common.output("synthetic.partial.jsonl")?;
            save_corpus(&partial, &path)?;
            bail!(
                "generation aborted: {failed} of {total} requests failed; {} sentences kept in {}",
                partial.len(),
                path.display()
            );
        }
        Err(e) => return Err(e).context("generation failed"),
    };

    let corpus_path = common.output("synthetic.jsonl")?;
    save_corpus(&generation.corpus, &corpus_path)?;
    let log_path = common.output("generation_log.jsonl")?;
    write_log(&log_path, &generation.records)?;
    manifest.output("corpus", &corpus_path)?;
    manifest.output("generation_log", &log_path)?;
    manifest.summary(Summary {
        source_utterances: train.len(),
        generated: generation.corpus.len(),
        skipped: generation.skipped,
        failed: generation.failed,
        demonstrations_per_prompt: generation.records.iter().map(|r| r.demonstration_ids.len()).max(),
    })?;
    manifest.write(&common.output("synthesize_manifest.json")?)?;
    tracing::info!(
        generated = generation.corpus.len(),
        skipped = generation.skipped,
        failed = generation.failed,
        out = %corpus_path.display(),
        "done"
    );
    Ok(())
}
