use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use domainsynth::metrics::{self_bleu, SelfBleuSampling};
use domainsynth::sampling::typical_filter;
use domainsynth::toylm::NgramModel;
use domainsynth::wer::align;
use domainsynth_bench::{corpus, distribution, rng, sentence};
use std::hint::black_box;

fn bench_align(c: &mut Criterion) {
    let mut group = c.benchmark_group("align");
    let mut r = rng(1);
    for len in [8, 32, 128] {
        let reference = sentence(&mut r, len, len);
        let hypothesis = sentence(&mut r, len, len);
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| align(black_box(&reference), black_box(&hypothesis)))
        });
    }
    group.finish();
}

fn bench_typical(c: &mut Criterion) {
    let mut group = c.benchmark_group("typical_filter");
    for v in [64, 1024, 32_000] {
        let dist = distribution(v, 2);
        group.bench_with_input(BenchmarkId::from_parameter(v), &v, |b, _| {
            b.iter(|| typical_filter(black_box(&dist), 0.9).unwrap())
        });
    }
    group.finish();
}

fn bench_self_bleu(c: &mut Criterion) {
    let mut group = c.benchmark_group("self_bleu4");
    group.sample_size(10);
    for n in [200, 1000] {
        let corpus = corpus(n, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| self_bleu(black_box(&corpus), 4, SelfBleuSampling::Full).unwrap())
        });
    }
    group.finish();
}

fn bench_ngram(c: &mut Criterion) {
    let corpus = corpus(2000, 4);
    c.bench_function("ngram_fit_2000", |b| {
        b.iter(|| NgramModel::fit(black_box(&corpus), 3).unwrap())
    });
    let model = NgramModel::fit(&corpus, 3).unwrap();
    let context: Vec<String> = ["turn", "on"].iter().map(|s| s.to_string()).collect();
    c.bench_function("ngram_next_token_logits", |b| {
        b.iter(|| model.next_token_logits(black_box(&context)))
    });
}

criterion_group!(benches, bench_align, bench_typical, bench_self_bleu, bench_ngram);
criterion_main!(benches);
