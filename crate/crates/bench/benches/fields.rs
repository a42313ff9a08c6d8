use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fa_bench::probe_grid;
use fa_core::fields::{CombinedField, Field2, SeriesField, DEFAULT_DEPTH};
use fa_core::IfsParams;

fn series(c: &mut Criterion) {
    let pts = probe_grid(16);
    let mut g = c.benchmark_group("series_u");
    for depth in [8, 12, DEFAULT_DEPTH] {
        let u = SeriesField::new(IfsParams::derive(0.6).unwrap(), depth);
        g.bench_with_input(BenchmarkId::new("descent", depth), &u, |b, u| {
            b.iter(|| {
                pts.iter()
                    .map(|&x| u.eval_descent(0.4, black_box(x)))
                    .sum::<fa_core::Vec2>()
            })
        });
        if depth <= 12 {
            g.bench_with_input(BenchmarkId::new("naive", depth), &u, |b, u| {
                b.iter(|| {
                    pts.iter()
                        .map(|&x| u.eval_naive(0.4, black_box(x)))
                        .sum::<fa_core::Vec2>()
                })
            });
        }
    }
    g.finish();
}

fn combined(c: &mut Criterion) {
    let v = CombinedField::new(12, DEFAULT_DEPTH).unwrap();
    let pts: Vec<_> = probe_grid(16)
        .iter()
        .map(|p| p * 5.0 + fa_core::Vec2::new(12.0, 0.0))
        .collect();
    c.bench_function("combined_v", |b| {
        b.iter(|| pts.iter().map(|&x| v.eval(0.7, black_box(x))).sum::<fa_core::Vec2>())
    });
}

criterion_group!(benches, series, combined);
criterion_main!(benches);
