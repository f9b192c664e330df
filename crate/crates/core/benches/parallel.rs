use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hilbfs::geometry::metric::density_ratio_with;
use hilbfs::geometry::{fs_metric, ManifoldModel};
use hilbfs::maps::hilb_with;
use hilbfs::moments::{build_lambda_best_effort_with, default_floor};
use hilbfs::par::Exec;
use hilbfs::random::{random_pd, seeded};

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn hilbert_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("hilb");
    for k in [2u32, 6] {
        let m = ManifoldModel::p1_default(1, k).unwrap();
        let metric = fs_metric(&m, &random_pd(&mut seeded(1), m.n_sections(), 10.0)).unwrap();
        for (name, exec) in EXECS {
            group.bench_with_input(BenchmarkId::new(name, k), &k, |b, _| {
                b.iter(|| hilb_with(exec, black_box(&m), black_box(&metric)).unwrap())
            });
        }
    }
    group.finish();
}

fn curvature(c: &mut Criterion) {
    let mut group = c.benchmark_group("density_ratio");
    let m = ManifoldModel::p1_default(1, 6).unwrap();
    let metric = fs_metric(&m, &random_pd(&mut seeded(2), m.n_sections(), 10.0)).unwrap();
    for (name, exec) in EXECS {
        group.bench_function(name, |b| b.iter(|| density_ratio_with(exec, black_box(&m), black_box(&metric)).unwrap()));
    }
    group.finish();
}

fn lambda_rows(c: &mut Criterion) {
    let mut group = c.benchmark_group("lambda");
    group.sample_size(10);
    let k = 3;
    let m = ManifoldModel::p1_default(1, k).unwrap();
    for (name, exec) in EXECS {
        group.bench_function(name, |b| {
            b.iter(|| build_lambda_best_effort_with(exec, black_box(&m), default_floor(k), 1e-11).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, hilbert_map, curvature, lambda_rows);
criterion_main!(benches);
