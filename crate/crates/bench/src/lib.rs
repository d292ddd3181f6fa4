//! Seeded inputs for the kernel benchmarks.

use domainsynth::corpus::{Corpus, Source, Utterance};
use domainsynth::sampling::TokenDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "play", "set", "the", "a", "my", "alarm", "music", "lights", "for", "tomorrow", "morning", "turn", "on", "off",
    "what", "is", "weather", "today", "send", "email", "to", "order", "pizza", "news", "list", "add", "remind", "me",
    "at", "seven", "kitchen", "volume",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sentence(rng: &mut impl Rng, min: usize, max: usize) -> Vec<String> {
    let len = rng.random_range(min..=max);
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
        .collect()
}

/// `n` utterances of 4 to 14 words over a small command vocabulary.
pub fn corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = rng(seed);
    let utterances = (0..n)
        .map(|i| {
            let text = sentence(&mut rng, 4, 14).join(" ");
            let domain = ["alarm", "music", "iot", "weather"][i % 4];
            Utterance::new(format!("u{i}"), text, domain, Source::Real).expect("valid utterance")
        })
        .collect();
    Corpus::new("bench", utterances).expect("distinct ids")
}

/// Random distribution over `v` tokens with a heavy head.
pub fn distribution(v: usize, seed: u64) -> TokenDistribution {
    let mut rng = rng(seed);
    let w: Vec<f64> = (0..v).map(|_| rng.random::<f64>().powi(4) + 1e-9).collect();
    let z: f64 = w.iter().sum();
    TokenDistribution::new(w.into_iter().map(|x| x / z).collect()).expect("normalized")
}
