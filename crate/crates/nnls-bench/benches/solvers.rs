use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nnls_bench::{corrupted_instance, fixed_budget_config, race_style_instance};
use nnls_core::solvers::{solve_gd, solve_lawson_hanson, solve_pgd, solve_sgd, StepRule};

fn bench_descent_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("descent_1k_iters");
    for &(m, n) in &[(30usize, 50usize), (128, 256)] {
        let problem = race_style_instance(m, n, 4.min(n));
        for layers in [2u32, 3] {
            let cfg = fixed_budget_config(n, layers, 1000);
            group.bench_with_input(
                BenchmarkId::new(format!("gd-{layers}l"), format!("{m}x{n}")),
                &problem,
                |b, p| b.iter(|| black_box(solve_gd(p, &cfg, None).unwrap().iterations)),
            );
        }
        let mut sgd_cfg = fixed_budget_config(n, 3, 1000);
        sgd_cfg.trace_every = 100;
        group.bench_with_input(
            BenchmarkId::new("sgd-3l", format!("{m}x{n}")),
            &problem,
            |b, p| b.iter(|| black_box(solve_sgd(p, &sgd_cfg).unwrap().iterations)),
        );
        group.bench_with_input(
            BenchmarkId::new("pgd", format!("{m}x{n}")),
            &problem,
            |b, p| {
                let rule = StepRule::LipschitzOracle { refresh_every: 1 };
                b.iter(|| black_box(solve_pgd(p, &rule, 1000, 1e-300).unwrap().iterations))
            },
        );
    }
    group.finish();
}

fn bench_lawson_hanson(c: &mut Criterion) {
    let mut group = c.benchmark_group("lawson_hanson");
    for &(m, n, s) in &[(30usize, 50usize, 3usize), (64, 32, 4)] {
        let problem = corrupted_instance(m, n, s.min(n), 0.3);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{m}x{n}")),
            &problem,
            |b, p| b.iter(|| black_box(solve_lawson_hanson(p, 1e-10, 10_000).unwrap().iterations)),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_descent_steps, bench_lawson_hanson);
criterion_main!(benches);
