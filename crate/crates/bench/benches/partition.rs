use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use r2p_bench::{effect_data, regression_data};
use r2p_core::baselines::{fit_ct_a, BaselineConfig};
use r2p_core::partition::{r2p_fit, r2p_hte_fit};
use r2p_core::{EstimatorConfig, PartitionConfig};

fn regression(c: &mut Criterion) {
    let mut group = c.benchmark_group("r2p_regression_knn");
    group.sample_size(20);
    for n in [300, 1000] {
        let ds = regression_data(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &ds, |b, ds| {
            b.iter(|| {
                r2p_fit(
                    black_box(ds),
                    &EstimatorConfig::knn(10),
                    &PartitionConfig::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn effects(c: &mut Criterion) {
    let mut group = c.benchmark_group("r2p_hte");
    group.sample_size(10);
    let ds = effect_data(300, 2);
    for (name, est) in [
        ("knn", EstimatorConfig::knn(10)),
        ("ridge", EstimatorConfig::ridge(1.0)),
        ("gp", EstimatorConfig::gp()),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| r2p_hte_fit(black_box(&ds), &est, &PartitionConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn causal_tree(c: &mut Criterion) {
    let ds = effect_data(1000, 4);
    let rows: Vec<usize> = (0..ds.len()).collect();
    c.bench_function("ct_a_1000", |b| {
        b.iter(|| fit_ct_a(black_box(&ds), &rows, &BaselineConfig::adaptive()).unwrap())
    });
}

criterion_group!(benches, regression, effects, causal_tree);
criterion_main!(benches);
