use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ideal_bench::{gaussian_blobs, BlobSpec};
use ideal_core::{
    classify_wta, evaluate, fit_prototypes, Budget, DecisionConfig, EmbeddingDataset, Method,
    SelectionParams,
};

fn blobs(classes: usize, dim: usize, per_class: usize, seed: u64) -> EmbeddingDataset {
    gaussian_blobs(&BlobSpec {
        classes,
        dim,
        per_class,
        separation: 4.0,
        sigma: 1.0,
        seed,
    })
}

fn params(budget: Option<Budget>, radius: Option<f64>) -> SelectionParams {
    SelectionParams {
        budget,
        radius,
        ..SelectionParams::default()
    }
}

fn selection(c: &mut Criterion) {
    let train = blobs(10, 128, 200, 1);
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    let budgeted = params(Some(Budget::FractionOfClass(0.05)), None);
    for method in [Method::Random, Method::KmeansNearest, Method::Kmeans] {
        group.bench_function(BenchmarkId::new(method.to_string(), "10x200x128"), |b| {
            b.iter(|| fit_prototypes(black_box(&train), method, &budgeted, 7).unwrap())
        });
    }
    group.bench_function(BenchmarkId::new("xdnn", "10x200x128"), |b| {
        b.iter(|| fit_prototypes(black_box(&train), Method::Xdnn, &params(None, None), 7).unwrap())
    });
    let elm = params(None, Some(16.0));
    group.bench_function(BenchmarkId::new("elm", "10x200x128"), |b| {
        b.iter(|| fit_prototypes(black_box(&train), Method::Elm, &elm, 7).unwrap())
    });
    group.finish();
}

fn classification(c: &mut Criterion) {
    let train = blobs(10, 512, 100, 1);
    let test = blobs(10, 512, 20, 2);
    let mut group = c.benchmark_group("classify");
    for count in [1usize, 10, 100] {
        let set = fit_prototypes(
            &train,
            Method::Random,
            &params(Some(Budget::FixedPerClass(count)), None),
            3,
        )
        .unwrap();
        let query = &test.records()[0].vector;
        group.bench_function(BenchmarkId::new("wta", set.len()), |b| {
            b.iter(|| classify_wta(black_box(query), &set).unwrap())
        });
    }
    let set = fit_prototypes(
        &train,
        Method::Random,
        &params(Some(Budget::FixedPerClass(10)), None),
        3,
    )
    .unwrap();
    group.sample_size(20);
    group.bench_function("evaluate/200 queries", |b| {
        b.iter(|| evaluate(&set, &DecisionConfig::default(), black_box(&test)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, selection, classification);
criterion_main!(benches);
