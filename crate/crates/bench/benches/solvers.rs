use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use genrec_bench::reference_instance;
use genrec_core::solvers::{admm_solve, gd_solve};
use genrec_core::{AdmmConfig, GdConfig, Objective};

fn bench_admm(c: &mut Criterion) {
    let (net, m, _, y) = reference_instance();
    let mut group = c.benchmark_group("admm_l1");
    group.sample_size(20);
    for &iters in &[100usize, 1000] {
        let cfg = AdmmConfig { max_iter: iters, ..Default::default() };
        group.bench_function(format!("{iters}_iters"), |b| {
            b.iter(|| admm_solve(black_box(&net), black_box(&m), black_box(&y), &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_gd(c: &mut Criterion) {
    let (net, m, _, y) = reference_instance();
    let mut group = c.benchmark_group("gd");
    group.sample_size(20);
    for objective in [Objective::L1Squared, Objective::L2Squared] {
        let mut cfg = GdConfig::new(objective);
        cfg.max_steps = 200;
        let name = match objective {
            Objective::L1Squared => "l1sq_200_steps",
            _ => "l2sq_200_steps",
        };
        group.bench_function(name, |b| {
            b.iter(|| gd_solve(black_box(&net), black_box(&m), black_box(&y), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_admm, bench_gd);
criterion_main!(benches);
