//! Rayon versus sequential on the three hot loops: forest fitting,
//! per-tree fANOVA decompositions and surrogate searches.
//! Build with `--no-default-features` to see the fallback everywhere.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qnn_importance::fanova::variance_decomposition;
use qnn_importance::forest::{Forest, ForestParams};
use qnn_importance::par;
use qnn_importance::space::{self, ConfigSpace};
use qnn_importance::verification::random_search;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| space::to_feature_vector(&space::sample(&mut rng)).to_vec())
        .collect();
    let y = x.iter().map(|r| (r[0] + 0.1 * r[2]).tanh() + 0.05 * r[6]).collect();
    (x, y)
}

fn forest_fit(c: &mut Criterion) {
    let (x, y) = table(1000);
    let space = ConfigSpace::qnn();
    let params = ForestParams { n_trees: 32, ..ForestParams::default() };
    let mut g = c.benchmark_group("forest_fit");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| Forest::fit(black_box(&x), &y, &space, params, 1).unwrap())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| Forest::fit_sequential(black_box(&x), &y, &space, params, 1).unwrap())
    });
    g.finish();
}

fn decompositions(c: &mut Criterion) {
    let (x, y) = table(1000);
    let space = ConfigSpace::qnn();
    let forest = Forest::fit(&x, &y, &space, ForestParams::default(), 3).unwrap();
    let one = |t: usize| variance_decomposition(&forest.trees[t], &space);
    let mut g = c.benchmark_group("fanova_decompositions");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| par::map_range(forest.trees.len(), one)));
    g.bench_function("sequential", |b| b.iter(|| par::map_range_seq(forest.trees.len(), one)));
    g.finish();
}

fn searches(c: &mut Criterion) {
    let (x, y) = table(400);
    let forest = Forest::fit(&x, &y, &ConfigSpace::qnn(), ForestParams::default(), 2).unwrap();
    let run = |s: usize| random_search(&forest, Some((2, 3.0)), 200, s as u64).unwrap();
    let mut g = c.benchmark_group("searches");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| par::map_range(16, run)));
    g.bench_function("sequential", |b| b.iter(|| par::map_range_seq(16, run)));
    g.finish();
}

criterion_group!(benches, forest_fit, decompositions, searches);
criterion_main!(benches);
