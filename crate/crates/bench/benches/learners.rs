use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ocp_core::learners::estimators::{estimator_bandit, estimator_unlock_plus};
use ocp_core::learners::{sample_arm, LearnerState};
use ocp_core::rng::{stream, LEARNER_STREAM};
use ocp_core::{HyperParams, LossParams, MiscoverBit, ThresholdGrid, Variant};

fn state(k: usize) -> LearnerState {
    let hyper = HyperParams::theorem_schedule(k, 50_000).unwrap();
    let gains = (0..k).map(|i| (i as f64 * 0.37).sin() * 40.0).collect();
    LearnerState::with_cum_gain(gains, hyper, Variant::UnlockPlus).unwrap()
}

fn strategy(c: &mut Criterion) {
    let mut group = c.benchmark_group("strategy");
    for k in [20, 200, 2000] {
        let s = state(k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &s, |b, s| b.iter(|| black_box(s).strategy()));
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let k = 200;
    let s = state(k);
    let strategy = s.strategy();
    let beta = s.hyper().beta;
    let grid = ThresholdGrid::uniform(k).unwrap();
    let params = LossParams::for_horizon(0.15, 40.0, 50_000, 0.5).unwrap();
    let covered = 120;
    let gains: Vec<f64> = (0..k)
        .map(|i| {
            let m = if i < covered { MiscoverBit::COVERED } else { MiscoverBit::MISCOVERED };
            params.gain(grid.value(i), m)
        })
        .collect();
    let pseudo: Vec<f64> = grid.values().iter().map(|&p| params.pseudo_gain(p)).collect();

    let mut group = c.benchmark_group("estimator_k200");
    group.bench_function("bandit", |b| {
        b.iter(|| estimator_bandit(black_box(80), gains[80], &strategy, beta))
    });
    group.bench_function("unlock_plus_covered", |b| {
        b.iter(|| {
            estimator_unlock_plus(black_box(80), MiscoverBit::COVERED, covered, &gains, &pseudo, &strategy, beta)
                .unwrap()
        })
    });
    group.bench_function("unlock_plus_missed", |b| {
        b.iter(|| {
            estimator_unlock_plus(black_box(150), MiscoverBit::MISCOVERED, 0, &gains, &pseudo, &strategy, beta)
                .unwrap()
        })
    });
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let strategy = state(200).strategy();
    let mut rng = stream(1, LEARNER_STREAM);
    c.bench_function("sample_arm_k200", |b| b.iter(|| sample_arm(black_box(&strategy), &mut rng)));
}

criterion_group!(benches, strategy, estimators, sampling);
criterion_main!(benches);
