use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fa_bench::squeezed_markers;
use fa_core::activescalar::{slit_rhs, slit_rhs_odd, solve_slit, MollifiedKernel, SolverConfig};

fn rhs(c: &mut Criterion) {
    let mut g = c.benchmark_group("slit_rhs");
    for n in [100, 400, 1600] {
        let m = MollifiedKernel::build(2.0 / n as f64).unwrap();
        let y = squeezed_markers(n);
        let mut out = vec![0.0; n];
        g.bench_with_input(BenchmarkId::new("full", n), &y, |b, y| {
            b.iter(|| slit_rhs(black_box(y), &m, 1.0, &mut out))
        });
        g.bench_with_input(BenchmarkId::new("odd", n), &y, |b, y| {
            b.iter(|| slit_rhs_odd(black_box(y), &m, 1.0, &mut out))
        });
    }
    g.finish();
}

fn kernel_table(c: &mut Criterion) {
    c.bench_function("mollified_kernel_build", |b| {
        b.iter(|| MollifiedKernel::build(black_box(1e-3)).unwrap())
    });
}

fn short_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_slit");
    g.sample_size(10);
    g.bench_function("n100_t0.5", |b| {
        b.iter(|| solve_slit(&SolverConfig::new(100, None, 1e-2, 0.5)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, rhs, kernel_table, short_run);
criterion_main!(benches);
