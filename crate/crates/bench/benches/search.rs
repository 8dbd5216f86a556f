use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpe_bench::{grid_like_model, random_network};
use mpe_core::rng::{random_assignment, rng_from_seed};
use mpe_core::scorer::{neighborhood_gains, LlScorer};
use mpe_core::search::{enumerate_neighbors, gls_plus_search, greedy_search, SearchConfig};
use mpe_core::QuerySpec;

fn gains(c: &mut Criterion) {
    let mut group = c.benchmark_group("neighborhood_gains");
    for n in [100, 1000] {
        let model = grid_like_model(n, 3, n / 2, 1);
        let q = QuerySpec::all_query(&model);
        let x = random_assignment(&model, &q, &mut rng_from_seed(2));
        let moves = enumerate_neighbors(&model, &x, &q);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| neighborhood_gains(&model, black_box(&x), &moves))
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("network_forward");
    group.sample_size(20);
    for n in [50, 200] {
        let model = grid_like_model(n, 2, 0, 3);
        let net = random_network(&model, 32, 2, 4);
        let q = QuerySpec::all_query(&model);
        let x = random_assignment(&model, &q, &mut rng_from_seed(5));
        let moves = enumerate_neighbors(&model, &x, &q);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| net.forward(black_box(&x), &moves).unwrap())
        });
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let model = grid_like_model(500, 3, 250, 6);
    let q = QuerySpec::all_query(&model);
    let x0 = random_assignment(&model, &q, &mut rng_from_seed(7));
    let mut group = c.benchmark_group("search_100_steps");
    group.bench_function("greedy", |b| {
        b.iter(|| greedy_search(&model, &q, &LlScorer, &SearchConfig::greedy(100, 8), black_box(&x0)).unwrap())
    });
    group.bench_function("gls+", |b| {
        b.iter(|| gls_plus_search(&model, &q, &LlScorer, &SearchConfig::gls(100, 8), black_box(&x0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, gains, forward, search);
criterion_main!(benches);
