use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Args;
use domainsynth::llm_client::mock::{serve, MockOptions};
use domainsynth::llm_client::ToyLmBackend;
use domainsynth::prompting::format_instruction;
use domainsynth::toylm::{NgramModel, DEFAULT_ORDER};

use crate::config::{load, require, Common, FileConfig};

#[derive(Args)]
pub struct MockArgs {
    /// Corpus the served n-gram model is fit on.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Fit on plain sentences instead of instruction-formatted lines.
    #[arg(long)]
    pub plain: bool,
    /// Artificial latency per request in milliseconds.
    #[arg(long, default_value_t = 0)]
    pub delay_ms: u64,
    /// Percentage of requests answered with HTTP 500.
    #[arg(long, default_value_t = 0)]
    pub fail_percent: u8,
}

pub fn run(args: MockArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    if args.fail_percent > 100 {
        bail!("--fail-percent must be at most 100");
    }
    let path = require(args.corpus, &file.source, "corpus")?;
    let corpus = load(&path)?;
    let order = args.order.or(file.toylm_order).unwrap_or(DEFAULT_ORDER);
    let model = if args.plain {
        NgramModel::fit(&corpus, order)
    } else {
        let lines: Vec<String> = corpus.iter().map(format_instruction).collect();
        NgramModel::fit_texts(lines.iter().map(String::as_str), order)
    }
    .context("cannot fit the model")?;
    let options = MockOptions {
        delay: Duration::from_millis(args.delay_ms),
        fail_percent: args.fail_percent,
    };
    let rt = super::runtime(common.jobs)?;
    rt.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        let local = listener.local_addr()?;
        tracing::info!(addr = %local, vocab = model.vocab().len(), "mock completion service listening");
        serve(listener, ToyLmBackend::new(model), options).await?;
        Ok(())
    })
}
