use std::path::PathBuf;

use clap::Args;
use domainsynth::corpus::{leave_one_domain_out, normalize_domain};
use domainsynth::prompting::{build_instruction_dataset, write_instruction_dataset};

use crate::config::{load, require, Common, FileConfig};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct InstructionsArgs {
    /// Real source corpus.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Leave this domain out of the dataset.
    #[arg(long)]
    pub target: Option<String>,
}

pub fn run(args: InstructionsArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    let source_path = require(args.source, &file.source, "source")?;
    let target = args
        .target
        .or_else(|| file.target_domain.clone())
        .map(|t| normalize_domain(&t));
    let mut source = load(&source_path)?;
    if let Some(t) = &target {
        if source.domains().contains(t) {
            source = leave_one_domain_out(&source, t)?.source_train;
        }
    }
    let records = build_instruction_dataset(&source)?;
    let mut manifest = Manifest::new(
        "build-instructions",
        common.seed,
        serde_json::json!({ "target_domain": target }),
    )?;
    manifest.input("source", &source_path)?;
    let path = common.output("instructions.jsonl")?;
    let file = std::fs::File::create(&path)?;
    write_instruction_dataset(&records, file)?;
    manifest.output("dataset", &path)?;
    manifest.summary(serde_json::json!({ "records": records.len() }))?;
    manifest.write(&common.output("instructions_manifest.json")?)?;
    tracing::info!(records = records.len(), out = %path.display(), "instruction dataset written");
    Ok(())
}
