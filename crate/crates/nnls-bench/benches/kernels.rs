use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nnls_bench::{race_style_instance, BENCH_SEED};
use nnls_core::linalg::{gram_spectral_norm, hadamard_pow};
use nnls_core::objective::{flow_field, reduced_hessian};
use nnls_core::problem::gen_gaussian_matrix;

fn bench_flow_field(c: &mut Criterion) {
    let mut group = c.benchmark_group("flow_field");
    for &(m, n) in &[(30usize, 50usize), (128, 256), (256, 256)] {
        let p = race_style_instance(m, n, 4.min(n));
        let x = vec![0.5; n];
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{m}x{n}")),
            &p,
            |b, p| b.iter(|| black_box(flow_field(&p.a, &p.y, &x, 3).unwrap())),
        );
    }
    group.finish();
}

fn bench_spectral_norm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_spectral_norm");
    for &n in &[64usize, 256] {
        let a = gen_gaussian_matrix(n, n, BENCH_SEED);
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| black_box(gram_spectral_norm(a, 1e-10, 10_000).unwrap().value))
        });
    }
    group.finish();
}

fn bench_hessian_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("reduced_hessian");
    for &(m, n) in &[(64usize, 64usize), (256, 256)] {
        let p = race_style_instance(m, n, 4);
        let x = vec![0.3; n];
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{m}x{n}")),
            &p,
            |b, p| b.iter(|| black_box(reduced_hessian(&p.a, &p.y, &x, 2).unwrap())),
        );
    }
    group.finish();
}

fn bench_hadamard(c: &mut Criterion) {
    let x = vec![0.7; 4096];
    c.bench_function("hadamard_pow_4096_l3", |b| {
        b.iter(|| black_box(hadamard_pow(&x, 3)))
    });
}

criterion_group!(
    benches,
    bench_flow_field,
    bench_spectral_norm,
    bench_hessian_assembly,
    bench_hadamard
);
criterion_main!(benches);
