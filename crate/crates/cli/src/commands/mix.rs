use std::path::PathBuf;

use clap::Args;
use domainsynth::corpus::{leave_one_domain_out, normalize_domain, save_corpus, Source};
use domainsynth::mixer::{mix, MixSpec};
use serde::Serialize;

use crate::config::{load, require, Common, FileConfig};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct MixArgs {
    /// Synthetic target-domain corpus.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Real source-domain corpus to sample from.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Drop this domain from the real corpus before sampling.
    #[arg(long)]
    pub target: Option<String>,
    /// Fraction of the real corpus to add, in [0, 1].
    #[arg(long)]
    pub real_fraction: Option<f64>,
    /// Keep repeated synthetic sentences.
    #[arg(long)]
    pub no_dedup: bool,
}

#[derive(Serialize)]
struct Params {
    target_domain: Option<String>,
    mix: MixSpec,
}

#[derive(Serialize)]
struct Summary {
    synthetic_in: usize,
    synthetic_kept: usize,
    real_available: usize,
    real_included: usize,
    total: usize,
}

pub fn run(args: MixArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    let synthetic_path = require(args.synthetic, &file.synthetic, "synthetic")?;
    let real_path = require(args.real, &file.real, "real")?;
    let target = args
        .target
        .or_else(|| file.target_domain.clone())
        .map(|t| normalize_domain(&t));
    let dedup = if args.no_dedup {
        false
    } else {
        file.mix.dedup.unwrap_or(true)
    };
    let spec = MixSpec::new(
        args.real_fraction.or(file.mix.real_fraction).unwrap_or(0.10),
        dedup,
        common.seed,
    )?;

    let synthetic = load(&synthetic_path)?;
    let mut real = load(&real_path)?;
    if let Some(t) = &target {
        if real.domains().contains(t) {
            real = leave_one_domain_out(&real, t)?.source_train;
        }
    }

    let mut manifest = Manifest::new(
        "mix",
        common.seed,
        Params {
            target_domain: target,
            mix: spec,
        },
    )?;
    manifest.input("synthetic", &synthetic_path)?;
    manifest.input("real", &real_path)?;

    let mixed = mix(&synthetic, &real, &spec)?;
    let real_included = mixed.iter().filter(|u| u.source == Source::Real).count();
    let path = common.output("mixed.jsonl")?;
    save_corpus(&mixed, &path)?;
    manifest.output("corpus", &path)?;
    manifest.summary(Summary {
        synthetic_in: synthetic.len(),
        synthetic_kept: mixed.len() - real_included,
        real_available: real.len(),
        real_included,
        total: mixed.len(),
    })?;
    manifest.write(&common.output("mix_manifest.json")?)?;
    tracing::info!(total = mixed.len(), real = real_included, out = %path.display(), "mixed");
    Ok(())
}
