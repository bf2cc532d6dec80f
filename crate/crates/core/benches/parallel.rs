//! Parallel-vs-sequential comparison for the data-parallel inner loops:
//! matrix-product kernels, candidate scoring, and per-sentence evaluation.
//!
//! With the default `parallel` feature both paths are compiled, so one run
//! reports the speedup directly. Built with `--no-default-features` the
//! "par" entries simply alias the sequential code.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;

use elink_core::eval::{match_all, match_predictions, GoldSpec};
use elink_core::kg::{EntityRecord, KgIndex};
use elink_core::pipeline::LinkPrediction;
use elink_core::tape::kernels;
use elink_core::util::seeded_rng;

fn rand_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    // (m, k, n): a gate product at default model size (row vector times
    // matrix), and a square batch product.
    for &(m, k, n) in &[(1usize, 600usize, 300usize), (64, 256, 256)] {
        let mut rng = seeded_rng(42);
        let a = rand_vec(m * k, &mut rng);
        let b = rand_vec(k * n, &mut rng);
        let mut out = vec![0.0; m * n];
        group.throughput(Throughput::Elements((m * k * n) as u64));
        group.bench_with_input(BenchmarkId::new("seq", format!("{m}x{k}x{n}")), &(), |bench, _| {
            bench.iter(|| {
                kernels::matmul_seq(black_box(&a), black_box(&b), &mut out, m, k, n);
                black_box(&out);
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", format!("{m}x{k}x{n}")), &(), |bench, _| {
            bench.iter(|| {
                kernels::matmul_par(black_box(&a), black_box(&b), &mut out, m, k, n);
                black_box(&out);
            })
        });
    }
    group.finish();
}

fn bench_matmul_nt(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul_nt");
    // Attention scoring shape: one decoder state against many encoder rows,
    // and the softmax head against a large vocabulary.
    for &(m, k, n) in &[(1usize, 300usize, 25usize), (1, 300, 20_000)] {
        let mut rng = seeded_rng(43);
        let a = rand_vec(m * k, &mut rng);
        let b = rand_vec(n * k, &mut rng);
        let mut out = vec![0.0; m * n];
        group.throughput(Throughput::Elements((m * k * n) as u64));
        group.bench_with_input(BenchmarkId::new("seq", format!("{m}x{k}x{n}")), &(), |bench, _| {
            bench.iter(|| {
                kernels::matmul_nt_seq(black_box(&a), black_box(&b), &mut out, m, k, n);
                black_box(&out);
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", format!("{m}x{k}x{n}")), &(), |bench, _| {
            bench.iter(|| {
                kernels::matmul_nt_par(black_box(&a), black_box(&b), &mut out, m, k, n);
                black_box(&out);
            })
        });
    }
    group.finish();
}

fn search_index(entities: usize) -> KgIndex {
    let kinds = ["river", "city", "band", "tool", "ship", "archive"];
    let records: Vec<EntityRecord> = (0..entities)
        .map(|i| EntityRecord {
            id: format!("Q{}", 1 + i),
            label: format!("name{i} {}", kinds[i % kinds.len()]),
            aliases: vec![format!("alias{i}"), format!("name{i}")],
        })
        .collect();
    KgIndex::from_records(records)
}

fn bench_search(c: &mut Criterion) {
    let index = search_index(5000);
    // A fuzzy query touching a large candidate set via the length window.
    let query = "name294 rive";
    let mut group = c.benchmark_group("kg_search");
    group.sample_size(30);
    group.bench_function("seq", |b| {
        b.iter(|| black_box(index.search_sequential(black_box(query), 0.5, 64).unwrap()))
    });
    group.bench_function("par", |b| {
        b.iter(|| black_box(index.search(black_box(query), 0.5, 64).unwrap()))
    });
    group.finish();
}

fn bench_eval(c: &mut Criterion) {
    let mut rng = seeded_rng(44);
    let surfaces = ["alpha", "beta", "gamma", "delta"];
    let pairs: Vec<(Vec<GoldSpec>, Vec<LinkPrediction>)> = (0..512)
        .map(|_| {
            let gold: Vec<GoldSpec> = (0..rng.random_range(1..5))
                .map(|_| GoldSpec {
                    surface: surfaces[rng.random_range(0..surfaces.len())].into(),
                    qid: format!("Q{}", rng.random_range(1..6)),
                })
                .collect();
            let preds: Vec<LinkPrediction> = (0..rng.random_range(1..5))
                .map(|_| LinkPrediction {
                    surface: surfaces[rng.random_range(0..surfaces.len())].into(),
                    start: None,
                    end: None,
                    qid: format!("Q{}", rng.random_range(1..6)),
                    candidate_score: 1.0,
                    decode_score: -(rng.random::<f64>()),
                })
                .collect();
            (gold, preds)
        })
        .collect();
    let mut group = c.benchmark_group("eval_match");
    group.throughput(Throughput::Elements(pairs.len() as u64));
    group.bench_function("seq", |b| {
        b.iter(|| {
            let counts: Vec<_> = pairs.iter().map(|(g, p)| match_predictions(g, p)).collect();
            black_box(counts)
        })
    });
    group.bench_function("par", |b| b.iter(|| black_box(match_all(black_box(&pairs)))));
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_matmul_nt, bench_search, bench_eval);
criterion_main!(benches);
