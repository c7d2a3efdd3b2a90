use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use genrec_bench::{leaky_net, reference_instance};
use genrec_core::numerics::{gaussian_matrix, gaussian_vector, pseudo_inverse};

fn bench_pseudo_inverse(c: &mut Criterion) {
    let mut group = c.benchmark_group("pseudo_inverse");
    for &(rows, cols) in &[(30usize, 5usize), (30, 40), (100, 100)] {
        let a = gaussian_matrix(rows, cols, 7);
        group.bench_function(format!("{rows}x{cols}"), |b| {
            b.iter(|| pseudo_inverse(black_box(&a), None).unwrap())
        });
    }
    group.finish();
}

fn bench_generator(c: &mut Criterion) {
    let (net, _, z0, _) = reference_instance();
    let leaky = leaky_net();
    let z = gaussian_vector(5, 9);
    c.bench_function("forward_identity", |b| {
        b.iter(|| net.forward(black_box(&z0)).unwrap())
    });
    c.bench_function("forward_leaky", |b| {
        b.iter(|| leaky.forward(black_box(&z)).unwrap())
    });
    c.bench_function("jacobian_identity", |b| {
        b.iter(|| net.jacobian(black_box(&z0)).unwrap())
    });
    c.bench_function("jacobian_leaky", |b| {
        b.iter(|| leaky.jacobian(black_box(&z)).unwrap())
    });
}

criterion_group!(benches, bench_pseudo_inverse, bench_generator);
criterion_main!(benches);
