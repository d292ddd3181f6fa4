//! `domainsynth` command-line runner.

mod commands;
mod config;
mod manifest;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Common, FileConfig};

#[derive(Parser)]
#[command(
    name = "domainsynth",
    version,
    about = "Zero-shot domain adaptation text synthesis toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads and concurrent completion requests.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory that receives all output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic target-domain corpus.
    Synthesize(commands::synthesize::SynthesizeArgs),
    /// Diversity and similarity metrics of synthetic corpora.
    Profile(commands::profile::ProfileArgs),
    /// Per-domain WER table from transcript pairs.
    Wer(commands::wer::WerArgs),
    /// Expand (and optionally run) a corpus-size or demonstration sweep.
    Sweep(commands::sweep::SweepArgs),
    /// Combine synthetic text with a sample of real source-domain text.
    Mix(commands::mix::MixArgs),
    /// Serve the toy n-gram model over the completion protocol.
    MockLlm(commands::mock::MockArgs),
    /// Write the instruction-formatted finetuning dataset.
    BuildInstructions(commands::instructions::InstructionsArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let common = Common::resolve(cli.global.seed, cli.global.jobs, cli.global.out_dir, &file)?;
    match cli.command {
        Command::Synthesize(a) => commands::synthesize::run(a, &common, &file),
        Command::Profile(a) => commands::profile::run(a, &common, &file),
        Command::Wer(a) => commands::wer::run(a, &common, &file),
        Command::Sweep(a) => commands::sweep::run(a, &common, &file),
        Command::Mix(a) => commands::mix::run(a, &common, &file),
        Command::MockLlm(a) => commands::mock::run(a, &common, &file),
        Command::BuildInstructions(a) => commands::instructions::run(a, &common, &file),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("DOMAINSYNTH_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
