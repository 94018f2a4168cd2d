use std::hint::black_box;

use cardbench_bench::fixture;
use cardbench_core::estimators::{build, CardinalityEstimator, EstimatorConfig, Method};
use cardbench_core::oracle::{execute_count, true_cardinalities};
use cardbench_core::planner::{optimize, CostParams};
use cardbench_core::queryir::enumerate_subplans;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn estimate_latency(c: &mut Criterion) {
    let (catalog, queries) = fixture(0.5, 4, 10);
    let subplans: Vec<_> = queries.iter().map(|q| q.as_subplan()).collect();
    let cfg = EstimatorConfig {
        walks: 1000,
        ..Default::default()
    };
    let mut group = c.benchmark_group("estimate");
    for m in Method::ESTIMATORS {
        let est = build(m, catalog.clone(), &cfg).unwrap();
        group.bench_function(BenchmarkId::from_parameter(m), |b| {
            b.iter(|| {
                for sp in &subplans {
                    black_box(est.estimate(sp, 7).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let (catalog, queries) = fixture(0.2, 8, 20);
    let q = queries.iter().max_by_key(|q| q.tables.len()).unwrap();
    let truth = true_cardinalities(&enumerate_subplans(q, &catalog), &catalog).unwrap();
    let params = CostParams::default();
    c.bench_function(&format!("optimize/{}_tables", q.tables.len()), |b| {
        b.iter(|| black_box(optimize(q, &truth, &params).unwrap()))
    });
}

fn counting(c: &mut Criterion) {
    let (catalog, queries) = fixture(0.5, 4, 10);
    c.bench_function("execute_count/workload", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(execute_count(&q.as_subplan(), &catalog).unwrap());
            }
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = estimate_latency, planning, counting
}
criterion_main!(benches);
