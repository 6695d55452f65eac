use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sstep_bench::{laplacian, panel};
use sstep_core::{apply_sketch, build_sketch, cholqr2, rand_cholqr, ReduceLedger, SketchKind};

fn intra_block(c: &mut Criterion) {
    let mut group = c.benchmark_group("intra");
    for &cols in &[6usize, 61] {
        let v = panel(20_000, cols, 1e6, 1);
        let theta = build_sketch(SketchKind::Gaussian, 20_000, cols - 1, 2).unwrap();
        group.bench_with_input(BenchmarkId::new("cholqr2", cols), &v, |b, v| {
            b.iter(|| cholqr2(black_box(v), &mut ReduceLedger::new()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rand_cholqr", cols), &v, |b, v| {
            b.iter(|| rand_cholqr(black_box(v), &theta, &mut ReduceLedger::new()).unwrap())
        });
    }
    group.finish();
}

fn sketching(c: &mut Criterion) {
    let mut group = c.benchmark_group("sketch");
    let (n, s_hat) = (20_000, 20);
    let v = panel(n, s_hat + 1, 1e3, 3);
    for kind in [
        SketchKind::Gaussian,
        SketchKind::Count,
        SketchKind::CountGauss,
    ] {
        let theta = build_sketch(kind, n, s_hat, 4).unwrap();
        group.bench_function(kind.name(), |b| {
            b.iter(|| apply_sketch(&theta, black_box(&v), &mut ReduceLedger::new()).unwrap())
        });
    }
    group.finish();
}

fn spmv(c: &mut Criterion) {
    let a = laplacian(300);
    let x: Vec<f64> = (0..a.ncols()).map(|i| (i as f64).sin()).collect();
    c.bench_function("spmv/laplace_2d_300", |b| b.iter(|| a.spmv(black_box(&x))));
}

criterion_group!(benches, intra_block, sketching, spmv);
criterion_main!(benches);
