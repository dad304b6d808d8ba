use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recompose::{
    build_static_library, decode_action, encode_action, fill_gaps, rank_and_select, CodecConfig,
    DiscreteAction, EmbeddingVector, RetrievalParams,
};
use recompose_bench::{gap_after, workload};

fn codec(c: &mut Criterion) {
    let cfg = CodecConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let actions: Vec<DiscreteAction> = (0..1024)
        .map(|_| {
            DiscreteAction::new([
                rng.gen_range(0..100),
                rng.gen_range(0..100),
                rng.gen_range(0..100),
                rng.gen_range(0..72),
                rng.gen_range(18..54),
                rng.gen_range(0..72),
                rng.gen_range(0..=1),
            ])
        })
        .collect();
    let controls: Vec<_> = actions.iter().map(|a| decode_action(a, &cfg).unwrap()).collect();
    c.bench_function("decode_action x1024", |b| {
        b.iter(|| {
            for a in &actions {
                black_box(decode_action(black_box(a), &cfg).unwrap());
            }
        })
    });
    c.bench_function("encode_action x1024", |b| {
        b.iter(|| {
            for u in &controls {
                black_box(encode_action(black_box(u), &cfg).unwrap());
            }
        })
    });
}

fn retrieval(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_and_select");
    for n in [100, 1000] {
        let w = workload(n, 3);
        let q = EmbeddingVector::new(w.query.embedding.clone()).unwrap();
        let params = RetrievalParams::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| {
            b.iter(|| rank_and_select(&q, &w.plan, &w.library, &params, None).unwrap())
        });
    }
    group.finish();
}

fn coverage(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_static_library");
    for n in [100, 1000] {
        let w = workload(n, 5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| {
            b.iter(|| build_static_library(&w.library, 0.5, 0.03, None).unwrap())
        });
    }
    group.finish();

    let w = workload(1000, 5);
    let st = build_static_library(&w.library, 0.5, 0.03, None).unwrap();
    let gap = gap_after(&w, 0);
    let excluded = BTreeSet::new();
    c.bench_function("fill_gaps k_cov=3", |b| b.iter(|| fill_gaps(black_box(&gap), &st, 3, &excluded)));
}

criterion_group!(benches, codec, retrieval, coverage);
criterion_main!(benches);
