use ocp_core::environments::{
    write_replay, AdaptiveParams, ExponentParams, FixedStream, IidParams, ReplayEnv, ShiftParams,
};
use ocp_core::harness::{
    c_mc, inefficiency, miscoverage_rate, regret, regret_from_matrix, run_observed, summarize,
};
use ocp_core::{
    run, EnvSpec, FeedbackRule, MiscoverBit, RunSpec, StepRecord, StepTruth, ThresholdGrid, Variant,
};
use proptest::prelude::*;

const OCP_VARIANTS: [Variant; 3] = [Variant::Bandit, Variant::Unlock, Variant::UnlockPlus];

fn envs() -> Vec<EnvSpec> {
    vec![
        EnvSpec::Iid(IidParams { labels: 100, ..IidParams::default() }),
        EnvSpec::Exponent(ExponentParams { labels: 100, phase_length: 100, ..ExponentParams::default() }),
        EnvSpec::Shift(ShiftParams::default()),
        EnvSpec::Adaptive(AdaptiveParams { labels: 100, ..AdaptiveParams::default() }),
    ]
}

#[test]
fn lemma1_and_bound_hold_across_the_matrix() {
    for variant in OCP_VARIANTS {
        for env in envs() {
            for seed in 0..5 {
                let spec = RunSpec::standard(variant, 10, 600, 0.2, 40.0, 0.5, seed).unwrap();
                let mut e = env.build(&spec.grid, spec.horizon, seed).unwrap();
                let s = run(e.as_mut(), &spec).unwrap().summary;
                assert!(s.lemma1_pass, "{variant} {} seed {seed}: slack {}", env.kind_name(), s.lemma1_slack);
                assert!(s.bound_rhs >= s.mc - s.alpha);
            }
        }
    }
}

#[test]
fn learner_never_sees_a_score_on_miscoverage() {
    let spec = RunSpec::standard(Variant::UnlockPlus, 20, 1000, 0.1, 40.0, 0.5, 1).unwrap();
    let mut env = envs()[3].build(&spec.grid, 1000, 1).unwrap();
    let log = run(env.as_mut(), &spec).unwrap();
    assert!(log.records.iter().any(|r| r.m.is_miscovered()));
    for r in &log.records {
        assert_eq!(r.score_revealed, r.m.is_covered());
    }
}

#[test]
fn singleton_unlock_reproduces_bandit_bitwise() {
    for seed in 0..3 {
        let bandit = RunSpec::standard(Variant::Bandit, 12, 400, 0.15, 40.0, 0.5, seed).unwrap();
        let mut unlock = bandit.clone();
        unlock.variant = Variant::Unlock;
        unlock.feedback_rule = FeedbackRule::BanditOnly;
        let collect = |spec: &RunSpec| {
            let mut env = envs()[0].build(&spec.grid, spec.horizon, seed).unwrap();
            let mut gains = Vec::new();
            let log = run_observed(env.as_mut(), spec, |v| gains.push(v.learner.state().cum_gain().to_vec())).unwrap();
            (log.records, gains)
        };
        let (a, ga) = collect(&bandit);
        let (b, gb) = collect(&unlock);
        assert_eq!(a, b);
        for (x, y) in ga.iter().zip(&gb) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}

#[test]
fn replayed_stream_reproduces_the_live_run() {
    let spec = RunSpec::standard(Variant::UnlockPlus, 15, 700, 0.15, 40.0, 0.5, 21).unwrap();
    let env_spec = envs()[2].clone();
    let mut live_env = env_spec.build(&spec.grid, 700, 21).unwrap();
    let mut truths = Vec::new();
    let live = run_observed(live_env.as_mut(), &spec, |v| truths.push(v.truth.clone())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.csv");
    write_replay(std::fs::File::create(&path).unwrap(), &truths).unwrap();
    let mut replay = ReplayEnv::open(&path, 15).unwrap();
    let again = run(&mut replay, &spec).unwrap();
    assert_eq!(live, again);
}

fn naive_loss_rows(records: &[StepRecord], spec: &RunSpec) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            spec.grid
                .values()
                .iter()
                .map(|&p| {
                    let m = if r.f_star < p { MiscoverBit::MISCOVERED } else { MiscoverBit::COVERED };
                    spec.params.loss(p, m)
                })
                .collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_a_recount(
        k in 2usize..9,
        rows in proptest::collection::vec((0.0f64..=1.0, 0u32..50), 1..80),
        seed in 0u64..1000,
        alpha in 0.05f64..0.45,
    ) {
        let grid = ThresholdGrid::uniform(k).unwrap();
        let truths: Vec<StepTruth> = rows
            .iter()
            .enumerate()
            .map(|(i, &(f, extra))| {
                let covered = grid.covered_count(f);
                let set_sizes = (0..k).map(|j| if j < covered { extra + 1 } else { extra / (j as u32 + 1) }).collect();
                StepTruth { t: i + 1, f_star: f, set_sizes }
            })
            .collect();
        let mut spec = RunSpec::standard(Variant::Unlock, k, truths.len(), alpha, 40.0, 0.5, seed).unwrap();
        spec.grid = grid.clone();
        let log = run(&mut FixedStream::new(truths.clone()), &spec).unwrap();
        let recs = &log.records;
        let t = recs.len() as f64;

        let misses = recs.iter().filter(|r| r.f_star < r.pi).count() as f64;
        prop_assert!((miscoverage_rate(recs).unwrap() - misses / t).abs() <= 1e-12);
        let sizes: f64 = recs.iter().zip(&truths).map(|(r, tr)| tr.set_sizes[r.arm] as f64).sum();
        prop_assert!((inefficiency(recs).unwrap() - sizes / t).abs() <= 1e-12);

        let rows = naive_loss_rows(recs, &spec);
        let plays: Vec<usize> = recs.iter().map(|r| r.arm).collect();
        let played: f64 = plays.iter().zip(&rows).map(|(&a, row)| row[a]).sum();
        let best = (0..k).map(|a| rows.iter().map(|row| row[a]).sum::<f64>()).fold(f64::INFINITY, f64::min);
        let reg = regret(recs, &spec.grid, &spec.params).unwrap();
        prop_assert!((reg.value - (played - best)).abs() <= 1e-12);
        prop_assert!((regret_from_matrix(&plays, &rows).unwrap().value - reg.value).abs() <= 1e-12);

        // the comparator arm pi = 0 bounds the regret from below
        let zero: f64 = rows.iter().map(|row| row[0]).sum();
        prop_assert!(reg.value >= played - zero - 1e-12);

        let off = c_mc(recs, &spec.params).unwrap();
        prop_assert_eq!(off.n0 + off.n1, recs.len() as u64);
        let s = summarize(recs, &spec).unwrap();
        prop_assert!(s.lemma1_pass);
        prop_assert_eq!(s, log.summary);
    }
}
