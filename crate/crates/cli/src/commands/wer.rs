use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use domainsynth::corpus::TokenMode;
use domainsynth::wer::{cross_domain_report, domain_tallies, read_pairs, DomainResult, WerTally};
use serde::Serialize;

use crate::config::{require, Common, FileConfig};
use crate::manifest::{write_json, write_text, Manifest};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Lowercase and strip punctuation at token edges.
    Normalized,
    /// Whitespace split only.
    Raw,
}

#[derive(Args)]
pub struct WerArgs {
    /// Transcript pairs (JSONL: id, reference, hypothesis, domain) of the adapted system.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Transcript pairs of the unadapted baseline.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Row label of the adapted system.
    #[arg(long, default_value = "adapted")]
    pub name: String,
    /// Row label of the baseline.
    #[arg(long, default_value = "baseline")]
    pub baseline_name: String,
    #[arg(long, value_enum, default_value = "normalized")]
    pub tokens: Normalization,
}

fn tallies(path: &Path, mode: TokenMode) -> anyhow::Result<BTreeMap<String, WerTally>> {
    let file = File::open(path).with_context(|| format!("file not found: {}", path.display()))?;
    let pairs = read_pairs(BufReader::new(file)).with_context(|| format!("invalid pairs file {}", path.display()))?;
    if pairs.is_empty() {
        bail!("{} holds no transcript pairs", path.display());
    }
    Ok(domain_tallies(&pairs, mode))
}

#[derive(Debug, Serialize)]
struct DomainRow {
    domain: String,
    wer: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_wer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_improvement: Option<f64>,
    tally: WerTally,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_tally: Option<WerTally>,
}

#[derive(Debug, Serialize)]
struct Excluded {
    domain: String,
    reason: String,
}

#[derive(Debug, Serialize)]
struct Averages {
    wer: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_wer: Option<f64>,
    /// Mean of the per-domain relative improvements.
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_improvement: Option<f64>,
    /// Relative improvement of the mean WER over the mean baseline WER.
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_of_means: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    method: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_method: Option<&'a str>,
    tokens: Normalization,
    domains: Vec<DomainRow>,
    average: Averages,
    excluded: Vec<Excluded>,
}

fn csv_row(label: &str, values: impl Iterator<Item = f64>, average: f64) -> Vec<String> {
    std::iter::once(label.to_string())
        .chain(values.map(|v| format!("{v:.2}")))
        .chain(std::iter::once(format!("{average:.2}")))
        .collect()
}

pub fn run(args: WerArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    let pairs_path = require(args.pairs, &file.pairs, "pairs")?;
    let baseline_path = args.baseline.or_else(|| file.baseline_pairs.clone());
    let mode = match args.tokens {
        Normalization::Normalized => TokenMode::Wer,
        Normalization::Raw => TokenMode::Raw,
    };
    let adapted = tallies(&pairs_path, mode)?;
    let baseline = baseline_path.as_deref().map(|p| tallies(p, mode)).transpose()?;

    let mut domains: BTreeSet<&String> = adapted.keys().collect();
    if let Some(b) = &baseline {
        domains.extend(b.keys());
    }

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for domain in domains {
        let exclude = |reason: &str| Excluded {
            domain: domain.clone(),
            reason: reason.to_string(),
        };
        let Some(t) = adapted.get(domain) else {
            excluded.push(exclude("missing from the adapted pairs"));
            continue;
        };
        let Some(wer) = t.wer() else {
            excluded.push(exclude("no reference tokens"));
            continue;
        };
        let mut row = DomainRow {
            domain: domain.clone(),
            wer,
            baseline_wer: None,
            relative_improvement: None,
            tally: *t,
            baseline_tally: None,
        };
        if let Some(b) = &baseline {
            let Some(bt) = b.get(domain) else {
                excluded.push(exclude("missing from the baseline pairs"));
                continue;
            };
            let Some(bw) = bt.wer() else {
                excluded.push(exclude("no reference tokens in the baseline"));
                continue;
            };
            let Ok(r) = DomainResult::new(domain.as_str(), bw, wer) else {
                excluded.push(exclude("baseline WER is zero, relative improvement undefined"));
                continue;
            };
            row.baseline_wer = Some(bw);
            row.relative_improvement = Some(r.relative_improvement);
            row.baseline_tally = Some(*bt);
        }
        rows.push(row);
    }
    for e in &excluded {
        tracing::warn!(domain = e.domain, reason = e.reason, "domain excluded from averages");
    }
    if rows.is_empty() {
        bail!("no domain has scorable transcripts");
    }

    let mean = |f: &dyn Fn(&DomainRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let average = if baseline.is_some() {
        let results: Vec<DomainResult> = rows
            .iter()
            .map(|r| DomainResult::new(r.domain.as_str(), r.baseline_wer.unwrap(), r.wer))
            .collect::<Result<_, _>>()?;
        let report = cross_domain_report(&results)?;
        Averages {
            wer: report.mean_adapted_wer,
            baseline_wer: Some(report.mean_baseline_wer),
            relative_improvement: Some(report.mean_relative_improvement),
            relative_of_means: Some(report.relative_of_means),
        }
    } else {
        Averages {
            wer: mean(&|r| r.wer),
            baseline_wer: None,
            relative_improvement: None,
            relative_of_means: None,
        }
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("method")
        .chain(rows.iter().map(|r| r.domain.as_str()))
        .chain(std::iter::once("Average"))
        .collect();
    w.write_record(&header)?;
    if let Some(bw) = average.baseline_wer {
        w.write_record(csv_row(
            &args.baseline_name,
            rows.iter().map(|r| r.baseline_wer.unwrap()),
            bw,
        ))?;
    }
    w.write_record(csv_row(&args.name, rows.iter().map(|r| r.wer), average.wer))?;
    if let Some(ri) = average.relative_improvement {
        w.write_record(csv_row(
            "relative_improvement",
            rows.iter().map(|r| r.relative_improvement.unwrap()),
            ri,
        ))?;
    }
    let csv_text = String::from_utf8(w.into_inner()?)?;

    let summary = Summary {
        method: &args.name,
        baseline_method: baseline.is_some().then_some(args.baseline_name.as_str()),
        tokens: args.tokens,
        domains: rows,
        average,
        excluded,
    };

    let mut manifest = Manifest::new(
        "wer",
        common.seed,
        serde_json::json!({
            "method": summary.method,
            "baseline_method": summary.baseline_method,
            "tokens": args.tokens,
        }),
    )?;
    manifest.input("pairs", &pairs_path)?;
    if let Some(p) = &baseline_path {
        manifest.input("baseline_pairs", p)?;
    }
    let csv_path = common.output("wer.csv")?;
    write_text(&csv_path, &csv_text)?;
    let json_path = common.output("wer.json")?;
    write_json(&json_path, &summary)?;
    manifest.output("table", &csv_path)?;
    manifest.output("summary", &json_path)?;
    manifest.write(&common.output("wer_manifest.json")?)?;
    tracing::info!(average = summary.average.wer, domains = summary.domains.len(), "scored");
    Ok(())
}
