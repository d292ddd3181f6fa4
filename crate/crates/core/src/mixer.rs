//! Adaptation dataset assembly and sweep planning.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus, CorpusError, TokenMode, Utterance};
use crate::prompting::{PromptError, PromptStrategy};

#[derive(Debug, Error)]
pub enum MixError {
    #[error("real_fraction must be in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("synthetic corpus is empty")]
    EmptySynthetic,
    #[error("sweep points must be strictly increasing")]
    UnorderedPoints,
    #[error("sweep needs at least one point and one repeat")]
    EmptySweep,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixSpec", into = "RawMixSpec")]
pub struct MixSpec {
    real_fraction: f64,
    dedup: bool,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct RawMixSpec {
    real_fraction: f64,
    dedup: bool,
    seed: u64,
}

impl Default for RawMixSpec {
    fn default() -> Self {
        MixSpec::default().into()
    }
}

impl TryFrom<RawMixSpec> for MixSpec {
    type Error = MixError;

    fn try_from(r: RawMixSpec) -> Result<Self, Self::Error> {
        MixSpec::new(r.real_fraction, r.dedup, r.seed)
    }
}

impl From<MixSpec> for RawMixSpec {
    fn from(m: MixSpec) -> Self {
        RawMixSpec {
            real_fraction: m.real_fraction,
            dedup: m.dedup,
            seed: m.seed,
        }
    }
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            real_fraction: 0.10,
            dedup: true,
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn new(real_fraction: f64, dedup: bool, seed: u64) -> Result<Self, MixError> {
        if !(0.0..=1.0).contains(&real_fraction) {
            return Err(MixError::InvalidFraction(real_fraction));
        }
        Ok(Self {
            real_fraction,
            dedup,
            seed,
        })
    }

    pub fn real_fraction(&self) -> f64 {
        self.real_fraction
    }

    pub fn dedup(&self) -> bool {
        self.dedup
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `ceil(real_fraction * available)`, ignoring float noise just above an integer.
    pub fn real_count(&self, available: usize) -> usize {
        let exact = self.real_fraction * available as f64;
        let rounded = exact.round();
        let n = if (exact - rounded).abs() < 1e-9 {
            rounded
        } else {
            exact.ceil()
        };
        (n as usize).min(available)
    }
}

/// Synthetic utterances (deduplicated on normalized tokens when requested)
/// followed by a seeded uniform sample of the real corpus.
pub fn mix(synthetic: &Corpus, source_real: &Corpus, spec: &MixSpec) -> Result<Corpus, MixError> {
    if synthetic.is_empty() {
        return Err(MixError::EmptySynthetic);
    }
    let mut out: Vec<Utterance> = Vec::with_capacity(synthetic.len());
    let mut seen = HashSet::new();
    for u in synthetic {
        if spec.dedup && !seen.insert(tokenize(&u.text, TokenMode::Metric)) {
            continue;
        }
        out.push(u.clone());
    }
    let k = spec.real_count(source_real.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = rand::seq::index::sample(&mut rng, source_real.len(), k).into_vec();
    picked.sort_unstable();
    out.extend(picked.into_iter().map(|i| source_real.utterances()[i].clone()));
    Ok(Corpus::new(format!("{}+real", synthetic.name()), out)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CorpusSize,
    NumDemonstrations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPlan {
    axis: SweepAxis,
    points: Vec<usize>,
    repeats: usize,
}

impl SweepPlan {
    pub fn new(axis: SweepAxis, points: Vec<usize>, repeats: usize) -> Result<Self, MixError> {
        if points.is_empty() || repeats == 0 {
            return Err(MixError::EmptySweep);
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MixError::UnorderedPoints);
        }
        Ok(Self { axis, points, repeats })
    }

    pub fn axis(&self) -> SweepAxis {
        self.axis
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn repeats(&self) -> usize {
        self.repeats
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub axis: SweepAxis,
    pub point: usize,
    pub repeat: usize,
    pub seed: u64,
    /// Synthetic corpus prefix length (corpus-size axis only).
    pub corpus_size: Option<usize>,
    /// Prompting strategy (demonstration axis only); zero demonstrations
    /// means instruction-only prompting.
    pub strategy: Option<PromptStrategy>,
    pub skipped: bool,
    pub warning: Option<String>,
}

/// splitmix64 finalizer; a bijection on u64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a plan into one run per (point, repeat). `available_synthetic`
/// flags corpus-size points that exceed the synthetic corpus on hand.
pub fn plan_sweep(
    plan: &SweepPlan,
    base_seed: u64,
    available_synthetic: Option<usize>,
) -> Result<Vec<RunConfig>, MixError> {
    let mut runs = Vec::with_capacity(plan.points.len() * plan.repeats);
    for &point in &plan.points {
        for repeat in 0..plan.repeats {
            let seed = mix64(base_seed ^ runs.len() as u64);
            let mut run = RunConfig {
                axis: plan.axis,
                point,
                repeat,
                seed,
                corpus_size: None,
                strategy: None,
                skipped: false,
                warning: None,
            };
            match plan.axis {
                SweepAxis::CorpusSize => {
                    run.corpus_size = Some(point);
                    if let Some(avail) = available_synthetic.filter(|&a| point > a) {
                        run.skipped = true;
                        run.warning = Some(format!(
                            "corpus size {point} exceeds the {avail} synthetic utterances available"
                        ));
                    }
                }
                SweepAxis::NumDemonstrations => {
                    run.strategy = Some(if point == 0 {
                        PromptStrategy::instruct_only()
                    } else {
                        PromptStrategy::icif(point)?
                    });
                }
            }
            runs.push(run);
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::prompting::StrategyKind;
    use proptest::prelude::*;

    fn corpus(prefix: &str, texts: &[String], source: Source) -> Corpus {
        Corpus::new(
            prefix,
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Utterance::new(format!("{prefix}{i}"), t.clone(), "d", source).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn numbered(prefix: &str, n: usize, source: Source) -> Corpus {
        let texts: Vec<String> = (0..n).map(|i| format!("{prefix} sentence {i}")).collect();
        corpus(prefix, &texts, source)
    }

    #[test]
    fn ten_percent_of_thousand() {
        let syn = numbered("syn", 50, Source::Synthetic);
        let real = numbered("real", 1000, Source::Real);
        let m = mix(&syn, &real, &MixSpec::default()).unwrap();
        let reals = m.iter().filter(|u| u.source == Source::Real).count();
        assert_eq!(reals, 100);
        assert_eq!(m.len(), 150);
    }

    #[test]
    fn real_count_rounding() {
        let spec = MixSpec::new(0.1, true, 0).unwrap();
        assert_eq!(spec.real_count(30), 3);
        assert_eq!(spec.real_count(31), 4);
        assert_eq!(spec.real_count(0), 0);
        assert_eq!(MixSpec::new(0.001, true, 0).unwrap().real_count(5), 1);
        assert_eq!(MixSpec::new(1.0, true, 0).unwrap().real_count(7), 7);
        assert!(MixSpec::new(1.5, true, 0).is_err());
        assert!(MixSpec::new(-0.1, true, 0).is_err());
    }

    #[test]
    fn zero_fraction_and_dedup() {
        let texts = vec!["Turn it ON!".to_string(), "turn it on".to_string(), "other".to_string()];
        let syn = corpus("s", &texts, Source::Synthetic);
        let real = numbered("real", 10, Source::Real);
        let m = mix(&syn, &real, &MixSpec::new(0.0, true, 1).unwrap()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.utterances()[0].text, "Turn it ON!");
        let m = mix(&syn, &real, &MixSpec::new(0.0, false, 1).unwrap()).unwrap();
        assert_eq!(m.len(), 3);
        assert!(matches!(
            mix(&Corpus::empty("e"), &real, &MixSpec::default()),
            Err(MixError::EmptySynthetic)
        ));
    }

    #[test]
    fn sweep_cardinality_and_seeds() {
        let plan = SweepPlan::new(SweepAxis::CorpusSize, vec![1000, 5000], 3).unwrap();
        let runs = plan_sweep(&plan, 11, None).unwrap();
        assert_eq!(runs.len(), 6);
        let seeds: HashSet<_> = runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 6);
        assert_eq!(runs, plan_sweep(&plan, 11, None).unwrap());
    }

    #[test]
    fn sweep_flags_oversized_points() {
        let plan = SweepPlan::new(SweepAxis::CorpusSize, vec![100, 500], 1).unwrap();
        let runs = plan_sweep(&plan, 0, Some(300)).unwrap();
        assert!(!runs[0].skipped);
        assert!(runs[1].skipped);
        assert!(runs[1].warning.is_some());
    }

    #[test]
    fn demonstration_axis() {
        let plan = SweepPlan::new(SweepAxis::NumDemonstrations, vec![0, 2, 4, 6, 8, 10], 1).unwrap();
        let runs = plan_sweep(&plan, 0, None).unwrap();
        assert_eq!(runs[0].strategy.unwrap().kind(), StrategyKind::InstructOnly);
        for (run, k) in runs.iter().zip([0, 2, 4, 6, 8, 10]) {
            assert_eq!(run.strategy.unwrap().num_demonstrations(), k);
        }
        assert!(matches!(
            SweepPlan::new(SweepAxis::CorpusSize, vec![5, 5], 1),
            Err(MixError::UnorderedPoints)
        ));
        assert!(SweepPlan::new(SweepAxis::CorpusSize, vec![5], 0).is_err());
    }

    proptest! {
        #[test]
        fn mix_size_and_determinism(n_syn in 1usize..40, n_real in 0usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let texts: Vec<String> = (0..n_syn).map(|i| format!("s {}", i % 7)).collect();
            let syn = corpus("syn", &texts, Source::Synthetic);
            let real = numbered("real", n_real, Source::Real);
            let spec = MixSpec::new(frac, true, seed).unwrap();
            let a = mix(&syn, &real, &spec).unwrap();
            let deduped = n_syn.min(7);
            prop_assert_eq!(a.len(), deduped + spec.real_count(n_real));
            prop_assert_eq!(a.iter().filter(|u| u.source == Source::Real).count(), spec.real_count(n_real));
            prop_assert_eq!(a, mix(&syn, &real, &spec).unwrap());
            if frac > 0.0 && n_real > 0 {
                prop_assert!(spec.real_count(n_real) >= 1);
            }
        }
    }
}
