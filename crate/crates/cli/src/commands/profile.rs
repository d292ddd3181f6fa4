use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use domainsynth::corpus::Corpus;
use domainsynth::metrics::{profile_corpus, CorpusProfile, SelfBleuSampling, SELF_BLEU_FULL_LIMIT};
use serde::Serialize;

use crate::config::{load, require, restrict_domain, Common, FileConfig};
use crate::manifest::{write_json, write_text, Manifest};

#[derive(Args)]
pub struct ProfileArgs {
    /// Synthetic corpus to profile; repeat for several rows.
    #[arg(long)]
    pub synthetic: Vec<PathBuf>,
    /// Real corpus the unigram divergence is measured against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Compare against this domain of the reference corpus only.
    #[arg(long)]
    pub reference_domain: Option<String>,
    /// Self-BLEU hypotheses to score: `auto`, `full`, or a sample size.
    #[arg(long, default_value = "auto")]
    pub self_bleu: String,
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ProfileRow {
    pub corpus: String,
    pub utterances: usize,
    #[serde(flatten)]
    pub profile: CorpusProfile,
}

pub(crate) fn parse_self_bleu(spec: &str, seed: u64) -> anyhow::Result<SelfBleuSampling> {
    Ok(match spec {
        "auto" => SelfBleuSampling::Auto,
        "full" => SelfBleuSampling::Full,
        n => SelfBleuSampling::Sampled {
            size: n
                .parse()
                .with_context(|| format!("--self-bleu expects auto, full or a count, got {n:?}"))?,
            seed,
        },
    })
}

/// Scores `synthetic`; with `Auto`, large corpora are sampled with `seed`
/// rather than the library default so the run seed governs everything.
pub(crate) fn profile(
    synthetic: &Corpus,
    reference: &Corpus,
    sampling: SelfBleuSampling,
    seed: u64,
) -> anyhow::Result<CorpusProfile> {
    let sampling = match sampling {
        SelfBleuSampling::Auto if synthetic.len() > SELF_BLEU_FULL_LIMIT => SelfBleuSampling::Sampled {
            size: domainsynth::metrics::SELF_BLEU_DEFAULT_SAMPLE,
            seed,
        },
        SelfBleuSampling::Auto => SelfBleuSampling::Full,
        s => s,
    };
    profile_corpus(synthetic, reference, sampling).with_context(|| format!("cannot profile {}", synthetic.name()))
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn rows_csv(rows: &[ProfileRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "corpus",
        "distinct1",
        "distinct2",
        "self_bleu4",
        "js_div",
        "sample_size",
        "seed",
    ])?;
    for r in rows {
        let p = &r.profile;
        w.write_record([
            r.corpus.clone(),
            p.distinct1.to_string(),
            p.distinct2.to_string(),
            p.self_bleu4.to_string(),
            p.js_div.to_string(),
            fmt_opt(p.sample_size),
            fmt_opt(p.seed),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct Params<'a> {
    corpora: Vec<String>,
    reference_domain: Option<&'a str>,
    self_bleu: &'a str,
}

#[derive(Serialize)]
struct Report<'a> {
    reference: String,
    reference_utterances: usize,
    rows: &'a [ProfileRow],
}

pub fn run(args: ProfileArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    let synthetic = if args.synthetic.is_empty() {
        vec![require(None, &file.synthetic, "synthetic")?]
    } else {
        args.synthetic
    };
    let reference_path = require(args.reference, &file.reference, "reference")?;
    let reference_domain = args.reference_domain.or_else(|| file.reference_domain.clone());
    let sampling = parse_self_bleu(&args.self_bleu, common.seed)?;

    let reference = restrict_domain(load(&reference_path)?, reference_domain.as_deref())?;
    let mut manifest = Manifest::new(
        "profile",
        common.seed,
        Params {
            corpora: synthetic
                .iter()
                .map(|p| {
                    p.file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
                .collect(),
            reference_domain: reference_domain.as_deref(),
            self_bleu: &args.self_bleu,
        },
    )?;
    manifest.input("reference", &reference_path)?;

    let mut rows = Vec::with_capacity(synthetic.len());
    for path in &synthetic {
        let corpus = load(path)?;
        if corpus.is_empty() {
            bail!("{} is empty", path.display());
        }
        manifest.input("synthetic", path)?;
        let p = profile(&corpus, &reference, sampling, common.seed)?;
        tracing::info!(corpus = corpus.name(), ?p, "profiled");
        rows.push(ProfileRow {
            corpus: corpus.name().to_string(),
            utterances: corpus.len(),
            profile: p,
        });
    }

    let json_path = common.output("profile.json")?;
    write_json(
        &json_path,
        &Report {
            reference: reference.name().to_string(),
            reference_utterances: reference.len(),
            rows: &rows,
        },
    )?;
    let csv_path = common.output("profile.csv")?;
    write_text(&csv_path, &rows_csv(&rows)?)?;
    manifest.output("profile_json", &json_path)?;
    manifest.output("profile_csv", &csv_path)?;
    manifest.write(&common.output("profile_manifest.json")?)?;
    Ok(())
}
