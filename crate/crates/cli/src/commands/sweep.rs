use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use domainsynth::corpus::{leave_one_domain_out, normalize_domain, Corpus};
use domainsynth::mixer::{plan_sweep, RunConfig, SweepAxis, SweepPlan};
use domainsynth::prompting::StrategyKind;
use domainsynth::toylm::DEFAULT_ORDER;
use serde::Serialize;

use super::profile::{parse_self_bleu, profile};
use super::synthesize::{generate, Backend};
use crate::config::{endpoint_is_builtin, load, require, Common, FileConfig, SamplingArgs, BUILTIN_ENDPOINT};
use crate::manifest::{write_json, write_text, Manifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    CorpusSize,
    NumDemonstrations,
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::CorpusSize => SweepAxis::CorpusSize,
            Axis::NumDemonstrations => SweepAxis::NumDemonstrations,
        }
    }
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    /// Strictly increasing comma-separated points.
    #[arg(long, value_delimiter = ',')]
    pub points: Vec<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Run every planned configuration and write per-run corpus metrics.
    #[arg(long)]
    pub execute: bool,
    /// Synthetic corpus to take prefixes of (corpus-size axis).
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Real source corpus (demonstration axis).
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target domain (demonstration axis).
    #[arg(long)]
    pub target: Option<String>,
    /// Reference corpus for unigram divergence; defaults to the target domain of the source.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub reference_domain: Option<String>,
    /// Sentences generated per run (demonstration axis).
    #[arg(short, long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long, default_value = "auto")]
    pub self_bleu: String,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Serialize)]
struct PlanFile<'a> {
    plan: &'a SweepPlan,
    base_seed: u64,
    runs: &'a [RunConfig],
}

pub fn run(args: SweepArgs, common: &Common, file: &FileConfig) -> anyhow::Result<()> {
    let axis: SweepAxis = match (args.axis, file.sweep.axis) {
        (Some(a), _) => a.into(),
        (None, Some(a)) => a,
        (None, None) => bail!("missing required --axis"),
    };
    let points = if args.points.is_empty() {
        require(None, &file.sweep.points, "points")?
    } else {
        args.points.clone()
    };
    let repeats = args.repeats.or(file.sweep.repeats).unwrap_or(1);
    let plan = SweepPlan::new(axis, points, repeats).context("invalid sweep plan")?;

    let synthetic_path = args.synthetic.clone().or_else(|| file.synthetic.clone());
    let synthetic = match (axis, &synthetic_path) {
        (SweepAxis::CorpusSize, Some(p)) => Some(load(p)?),
        _ => None,
    };
    let runs = plan_sweep(&plan, common.seed, synthetic.as_ref().map(Corpus::len))?;
    for r in runs.iter().filter(|r| r.skipped) {
        tracing::warn!(
            point = r.point,
            repeat = r.repeat,
            warning = r.warning.as_deref().unwrap_or(""),
            "run skipped"
        );
    }
    let plan_path = common.output("sweep_plan.json")?;
    write_json(
        &plan_path,
        &PlanFile {
            plan: &plan,
            base_seed: common.seed,
            runs: &runs,
        },
    )?;
    if !args.execute {
        tracing::info!(runs = runs.len(), out = %plan_path.display(), "sweep planned");
        return Ok(());
    }
    execute(args, common, file, &plan, &runs, synthetic, synthetic_path)
}

#[allow(clippy::too_many_arguments)]
fn execute(
    args: SweepArgs,
    common: &Common,
    file: &FileConfig,
    plan: &SweepPlan,
    runs: &[RunConfig],
    synthetic: Option<Corpus>,
    synthetic_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    let reference_path = args.reference.or_else(|| file.reference.clone());
    let reference_domain = args.reference_domain.or_else(|| file.reference_domain.clone());
    let sampling_spec = args.self_bleu.clone();
    let mut manifest = Manifest::new(
        "sweep",
        common.seed,
        serde_json::json!({
            "plan": plan,
            "reference_domain": reference_domain,
            "self_bleu": sampling_spec,
        }),
    )?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "axis",
        "point",
        "repeat",
        "seed",
        "skipped",
        "utterances",
        "distinct1",
        "distinct2",
        "self_bleu4",
        "js_div",
    ])?;
    let axis_name = match plan.axis() {
        SweepAxis::CorpusSize => "corpus_size",
        SweepAxis::NumDemonstrations => "num_demonstrations",
    };
    let mut record = |run: &RunConfig, row: Option<(usize, domainsynth::metrics::CorpusProfile)>| {
        let mut fields = vec![
            axis_name.to_string(),
            run.point.to_string(),
            run.repeat.to_string(),
            run.seed.to_string(),
            run.skipped.to_string(),
        ];
        match row {
            Some((n, p)) => fields.extend([
                n.to_string(),
                p.distinct1.to_string(),
                p.distinct2.to_string(),
                p.self_bleu4.to_string(),
                p.js_div.to_string(),
            ]),
            None => fields.extend(std::iter::repeat(String::new()).take(5)),
        }
        csv.write_record(&fields)
    };

    match plan.axis() {
        SweepAxis::CorpusSize => {
            let Some(synthetic) = synthetic else {
                bail!("executing a corpus-size sweep needs --synthetic");
            };
            let reference_path = require(reference_path, &None, "reference")?;
            let reference = crate::config::restrict_domain(load(&reference_path)?, reference_domain.as_deref())?;
            manifest.input("synthetic", synthetic_path.as_deref().expect("loaded from a path"))?;
            manifest.input("reference", &reference_path)?;
            for run in runs {
                if run.skipped {
                    record(run, None)?;
                    continue;
                }
                let sub = synthetic.prefix(run.corpus_size.expect("corpus-size run"));
                let p = profile(&sub, &reference, parse_self_bleu(&sampling_spec, run.seed)?, run.seed)?;
                record(run, Some((sub.len(), p)))?;
            }
        }
        SweepAxis::NumDemonstrations => {
            let source_path = require(args.source, &file.source, "source")?;
            let target = normalize_domain(&require(args.target, &file.target_domain, "target")?);
            let endpoint = args
                .endpoint
                .or_else(|| file.endpoint.clone())
                .unwrap_or_else(|| BUILTIN_ENDPOINT.to_string());
            let n = args.n.or(file.num_sentences).unwrap_or(100);
            let source = load(&source_path)?;
            manifest.input("source", &source_path)?;
            let (train, held_out) = if source.domains().contains(&target) {
                let split = leave_one_domain_out(&source, &target)?;
                (split.source_train, split.target_test)
            } else {
                (source, Corpus::empty("none"))
            };
            let reference = match &reference_path {
                Some(p) => {
                    manifest.input("reference", p)?;
                    crate::config::restrict_domain(load(p)?, reference_domain.as_deref())?
                }
                None if !held_out.is_empty() => held_out,
                None => bail!("no --reference given and the source holds no {target:?} utterances"),
            };
            let backend = if endpoint_is_builtin(&endpoint) {
                let order = args.order.or(file.toylm_order).unwrap_or(DEFAULT_ORDER);
                // every point uses instruction-formatted prompts
                Backend::builtin(&train, StrategyKind::Icif, order)?
            } else {
                Backend::remote(&endpoint, args.timeout_secs.or(file.timeout_secs).unwrap_or(30.0))?
            };
            for run in runs {
                let strategy = run.strategy.expect("demonstration run");
                let sampling = args.sampling.resolve(&file.sampling, run.seed)?;
                let g = generate(&backend, strategy, &target, &train, n, &sampling, common.jobs)
                    .with_context(|| format!("run at k={} failed", run.point))?;
                if g.corpus.len() < 2 {
                    record(run, None)?;
                    continue;
                }
                let p = profile(
                    &g.corpus,
                    &reference,
                    parse_self_bleu(&sampling_spec, run.seed)?,
                    run.seed,
                )?;
                record(run, Some((g.corpus.len(), p)))?;
                tracing::info!(k = run.point, repeat = run.repeat, "run finished");
            }
        }
    }

    let csv_path = common.output("sweep.csv")?;
    write_text(&csv_path, &String::from_utf8(csv.into_inner()?)?)?;
    manifest.output("plan", &common.output("sweep_plan.json")?)?;
    manifest.output("metrics", &csv_path)?;
    manifest.write(&common.output("sweep_manifest.json")?)?;
    Ok(())
}
