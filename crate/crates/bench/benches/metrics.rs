use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mismatch_core::curves::scan_convergence;
use mismatch_core::{
    ofm_curve, report_with_ranges, BaselinePolicy, ConvergencePolicy, Direction, FoldSet, MetricOptions, MetricSeries,
    PairedRun, UnitCheck,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_decay(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 2.0 * (-(i as f64) / 40.0).exp() + rng.random_range(0.0..0.2))
        .collect()
}

fn series(name: &str, values: Vec<f64>) -> MetricSeries {
    let steps = (0..values.len() as u64).collect();
    MetricSeries::new(name, "loss", Direction::LowerIsBetter, steps, values).unwrap()
}

fn ofm(c: &mut Criterion) {
    let mut group = c.benchmark_group("ofm_curve");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for len in [100, 1_000, 10_000] {
        let target = series("target", noisy_decay(&mut rng, len));
        group.bench_with_input(BenchmarkId::from_parameter(len), &target, |b, t| {
            b.iter(|| ofm_curve(black_box(t), BaselinePolicy::RequireStepZero).unwrap())
        });
    }
    group.finish();
}

fn convergence(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let curve = noisy_decay(&mut rng, 10_000);
    let policy = ConvergencePolicy::new(0.0, 50).unwrap();
    c.bench_function("scan_convergence/10000", |b| {
        b.iter(|| scan_convergence(black_box(&curve), &policy).unwrap())
    });
}

fn folds(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let runs = (0..5)
        .map(|_| {
            let pretext = series("pretext", noisy_decay(&mut rng, 200));
            let target = series("target", noisy_decay(&mut rng, 200));
            PairedRun::new(pretext, target).unwrap()
        })
        .collect();
    let set = FoldSet::new(runs).unwrap();
    let options = MetricOptions {
        units: UnitCheck::Enforce,
        baseline: BaselinePolicy::RequireStepZero,
    };
    c.bench_function("report_with_ranges/5x200", |b| {
        b.iter(|| report_with_ranges(black_box(&set), options).unwrap())
    });
}

criterion_group!(benches, ofm, convergence, folds);
criterion_main!(benches);
