use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use noisesig_bench::benchmark_frames;
use noisesig_core::hos::cumulant_grid;
use noisesig_core::wpt::{forward_wpt, FilterKind, WptConfig};
use noisesig_core::{FeatureConfig, FeatureExtractor};

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_wpt");
    for n in [256usize, 1024, 4096] {
        let frame: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let cfg = WptConfig::new(n, 4).unwrap();
        let qmf = FilterKind::Db8.qmf();
        group.bench_with_input(BenchmarkId::from_parameter(n), &frame, |b, f| {
            b.iter(|| forward_wpt(black_box(f), &qmf, &cfg).unwrap())
        });
    }
    group.finish();
}

fn cumulants(c: &mut Criterion) {
    let z = benchmark_frames(1, 3).remove(0);
    c.bench_function("cumulant_grid/256/tau8", |b| b.iter(|| cumulant_grid(black_box(&z), 8).unwrap()));
}

fn signature(c: &mut Criterion) {
    let frames = benchmark_frames(16, 5);
    let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    c.bench_function("signature/16_frames", |b| {
        b.iter(|| {
            for (i, f) in frames.iter().enumerate() {
                black_box(ex.signature(f, i).unwrap());
            }
        })
    });
}

criterion_group!(benches, transform, cumulants, signature);
criterion_main!(benches);
