//! The sequential game: the harness holds the environment's full knowledge,
//! masks it into [`Feedback`] for the learner, and keeps the evaluator's view
//! needed for regret and coverage metrics.

use serde::{Deserialize, Serialize};

use crate::environments::{Environment, StepTruth};
use crate::error::{OcpError, Result};
use crate::grid_loss::{LossParams, MiscoverBit, ThresholdGrid};
use crate::learners::{FeedbackRule, HyperParams, Learner, LearnerState, Strategy, Variant};
use crate::rng::{stream, LEARNER_STREAM};

pub mod bounds;
pub mod metrics;

pub use crate::learners::Feedback;
pub use bounds::{theorem_bound_rhs, unlock_plus_c_t, unlock_plus_constant, BoundReport};
pub use metrics::{
    argmin_lowest, c_mc, c_mc_from_plays, column_losses, inefficiency, lemma1_check,
    miscoverage_rate, regret, regret_from_matrix, CoverageOffset, Lemma1Report, Regret,
    LEMMA1_TOLERANCE,
};

/// Default confidence level of the reported bound.
pub const DEFAULT_DELTA: f64 = 0.05;

/// One round as seen by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub arm: usize,
    pub pi: f64,
    pub m: MiscoverBit,
    pub loss: f64,
    pub set_size: u32,
    /// Evaluator-only: the true label's score.
    pub f_star: f64,
    /// Whether the learner's feedback carried the score.
    pub score_revealed: bool,
    /// Unlock+ estimator constant for this round.
    pub c_t: f64,
}

impl StepRecord {
    /// Losses of every arm this round.
    pub fn loss_row(&self, grid: &ThresholdGrid, params: &LossParams) -> Vec<f64> {
        let covered = grid.covered_count(self.f_star);
        grid.values()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let m = if i < covered {
                    MiscoverBit::COVERED
                } else {
                    MiscoverBit::MISCOVERED
                };
                params.loss(p, m)
            })
            .collect()
    }
}

/// Everything that determines a run besides the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub variant: Variant,
    pub grid: ThresholdGrid,
    pub params: LossParams,
    pub hyper: HyperParams,
    pub horizon: usize,
    pub seed: u64,
    pub delta: f64,
    pub feedback_rule: FeedbackRule,
    /// Starting cumulative gains; zeros when absent.
    pub initial_gains: Option<Vec<f64>>,
}

impl RunSpec {
    /// Uniform grid, horizon-scaled loss and the theorem schedule.
    pub fn standard(
        variant: Variant,
        k: usize,
        horizon: usize,
        alpha: f64,
        c: f64,
        rho: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            variant,
            grid: ThresholdGrid::uniform(k)?,
            params: LossParams::for_horizon(alpha, c, horizon, rho)?,
            hyper: HyperParams::theorem_schedule(k, horizon)?,
            horizon,
            seed,
            delta: DEFAULT_DELTA,
            feedback_rule: FeedbackRule::SemiBandit,
            initial_gains: None,
        })
    }

    pub fn k(&self) -> usize {
        self.grid.len()
    }

    pub fn learner(&self) -> Result<Learner> {
        let state = match &self.initial_gains {
            Some(g) => LearnerState::with_cum_gain(g.clone(), self.hyper, self.variant)?,
            None => LearnerState::new(self.k(), self.hyper, self.variant),
        };
        Learner::from_state(state, self.grid.clone(), self.params)?.with_feedback_rule(self.feedback_rule)
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(OcpError::InvalidParam("T must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(OcpError::Domain {
                name: "delta",
                value: self.delta,
                range: "(0, 1)",
            });
        }
        Ok(())
    }
}

/// Per-run metrics and checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub k: usize,
    pub horizon: usize,
    pub seed: u64,
    pub alpha: f64,
    pub delta: f64,
    pub mc: f64,
    pub ineff: f64,
    pub regret: f64,
    pub best_arm: usize,
    pub c1: f64,
    pub c_mc: f64,
    pub c_gap_scaled: Option<f64>,
    pub n0: u64,
    pub n1: u64,
    pub c_const: f64,
    pub bound_rhs: f64,
    pub vacuous: bool,
    pub lemma1_pass: bool,
    pub lemma1_slack: f64,
    pub gamma_clamped: bool,
    pub config_digest: Option<String>,
}

impl RunSummary {
    pub fn lemma1(&self) -> Lemma1Report {
        lemma1_check(self.mc, self.alpha, self.regret, self.horizon, self.c_mc, self.seed)
    }
}

/// A finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// What an observer sees after each round.
#[derive(Debug)]
pub struct StepView<'a> {
    pub record: &'a StepRecord,
    pub truth: &'a StepTruth,
    pub strategy: &'a Strategy,
    pub estimate: &'a [f64],
    pub learner: &'a Learner,
}

pub fn run(env: &mut dyn Environment, spec: &RunSpec) -> Result<RunLog> {
    run_observed(env, spec, |_| {})
}

/// [`run`] with a callback after every round.
pub fn run_observed<F>(env: &mut dyn Environment, spec: &RunSpec, mut observer: F) -> Result<RunLog>
where
    F: FnMut(&StepView<'_>),
{
    spec.validate()?;
    let grid = &spec.grid;
    let k = grid.len();
    let mut learner = spec.learner()?;
    let mut rng = stream(spec.seed, LEARNER_STREAM);
    let mut records = Vec::with_capacity(spec.horizon);
    for t in 1..=spec.horizon {
        let arm = learner.act(&mut rng);
        let strategy = learner
            .pending_strategy()
            .cloned()
            .ok_or_else(|| OcpError::InvalidParam("learner lost its strategy".into()))?;
        let truth = match env.next_truth(t)? {
            Some(truth) => truth,
            None if t == 1 => return Err(OcpError::EmptyStream),
            None => {
                return Err(OcpError::StreamEnded {
                    available: t - 1,
                    required: spec.horizon,
                })
            }
        };
        truth.validate(k)?;
        let pi = grid.value(arm);
        let feedback = Feedback::observe(truth.f_star, pi)?;
        let m = feedback.m();
        let estimate = learner.observe(&feedback)?;
        env.observe_play(arm, pi, m);
        let record = StepRecord {
            t,
            arm,
            pi,
            m,
            loss: spec.params.loss(pi, m),
            set_size: truth.set_sizes[arm],
            f_star: truth.f_star,
            score_revealed: feedback.f_star_revealed().is_some(),
            c_t: unlock_plus_c_t(arm, m, grid.covered_count(truth.f_star), &strategy),
        };
        observer(&StepView {
            record: &record,
            truth: &truth,
            strategy: &strategy,
            estimate: &estimate,
            learner: &learner,
        });
        records.push(record);
    }
    let summary = summarize(&records, spec)?;
    Ok(RunLog { records, summary })
}

/// Compute every summary metric from a log.
pub fn summarize(records: &[StepRecord], spec: &RunSpec) -> Result<RunSummary> {
    let k = spec.k();
    let horizon = records.len();
    let mc = miscoverage_rate(records)?;
    let ineff = inefficiency(records)?;
    let reg = regret(records, &spec.grid, &spec.params)?;
    let offset = c_mc(records, &spec.params)?;
    let c_const = unlock_plus_constant(records, k)?;
    let bound = theorem_bound_rhs(
        spec.variant,
        k,
        horizon,
        spec.delta,
        &spec.params,
        c_const,
        offset.c_mc,
    )?;
    let check = lemma1_check(mc, spec.params.alpha(), reg.value, horizon, offset.c_mc, spec.seed);
    Ok(RunSummary {
        variant: spec.variant,
        k,
        horizon,
        seed: spec.seed,
        alpha: spec.params.alpha(),
        delta: spec.delta,
        mc,
        ineff,
        regret: reg.value,
        best_arm: reg.best_arm,
        c1: offset.c1,
        c_mc: offset.c_mc,
        c_gap_scaled: offset.c_gap_scaled,
        n0: offset.n0,
        n1: offset.n1,
        c_const,
        bound_rhs: bound.rhs,
        vacuous: bound.vacuous,
        lemma1_pass: check.pass,
        lemma1_slack: check.slack,
        gamma_clamped: spec.hyper.gamma_clamped,
        config_digest: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{EnvSpec, FixedStream, IidParams};

    fn iid(labels: usize) -> EnvSpec {
        EnvSpec::Iid(IidParams {
            labels,
            ..IidParams::default()
        })
    }

    #[test]
    fn spiked_gains_force_the_first_arm() {
        let mut spec = RunSpec::standard(Variant::UnlockPlus, 5, 1, 0.15, 40.0, 0.5, 0).unwrap();
        spec.hyper = HyperParams::new(1.0, 0.0, 0.1).unwrap();
        spec.initial_gains = Some(vec![1e6, 0.0, 0.0, 0.0, 0.0]);
        let mut env = iid(10).build(&spec.grid, 1, 0).unwrap();
        let log = run(env.as_mut(), &spec).unwrap();
        assert_eq!(log.records.len(), 1);
        let r = log.records[0];
        assert_eq!((r.arm, r.pi, r.m), (0, 0.0, MiscoverBit::COVERED));
        assert_eq!(r.loss, spec.params.loss(0.0, MiscoverBit::COVERED));
    }

    #[test]
    fn identical_inputs_identical_logs() {
        for variant in Variant::ALL {
            let spec = RunSpec::standard(variant, 10, 300, 0.1, 40.0, 0.5, 17).unwrap();
            let mut a = iid(50).build(&spec.grid, 300, 17).unwrap();
            let mut b = iid(50).build(&spec.grid, 300, 17).unwrap();
            assert_eq!(run(a.as_mut(), &spec).unwrap(), run(b.as_mut(), &spec).unwrap());
        }
    }

    #[test]
    fn records_respect_the_information_barrier() {
        let spec = RunSpec::standard(Variant::UnlockPlus, 20, 2000, 0.15, 40.0, 0.5, 5).unwrap();
        let mut env = iid(100).build(&spec.grid, 2000, 5).unwrap();
        let log = run(env.as_mut(), &spec).unwrap();
        for r in &log.records {
            assert_eq!(r.score_revealed, r.m.is_covered());
            assert_eq!(r.loss, spec.params.loss(r.pi, r.m));
            let row = r.loss_row(&spec.grid, &spec.params);
            assert_eq!(row[r.arm], r.loss);
        }
        assert!(log.summary.lemma1_pass, "slack {}", log.summary.lemma1_slack);
        assert!((0.0..=1.0).contains(&log.summary.mc));
    }

    #[test]
    fn regret_dominates_gap_to_the_zero_arm() {
        let spec = RunSpec::standard(Variant::Bandit, 8, 500, 0.2, 40.0, 0.5, 2).unwrap();
        let mut env = iid(30).build(&spec.grid, 500, 2).unwrap();
        let log = run(env.as_mut(), &spec).unwrap();
        let zero_col: f64 = log
            .records
            .iter()
            .map(|r| r.loss_row(&spec.grid, &spec.params)[0])
            .sum();
        let played: f64 = log.records.iter().map(|r| r.loss).sum();
        assert!(log.summary.regret >= played - zero_col - 1e-12);
    }

    #[test]
    fn short_streams_are_reported() {
        let spec = RunSpec::standard(Variant::Unlock, 3, 5, 0.1, 40.0, 0.5, 0).unwrap();
        let mut empty = FixedStream::new(Vec::new());
        assert_eq!(run(&mut empty, &spec), Err(OcpError::EmptyStream));
        let truths = (1..=2)
            .map(|t| StepTruth {
                t,
                f_star: 0.5,
                set_sizes: vec![3, 2, 0],
            })
            .collect();
        let mut short = FixedStream::new(truths);
        assert_eq!(
            run(&mut short, &spec),
            Err(OcpError::StreamEnded {
                available: 2,
                required: 5
            })
        );
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = RunSpec::standard(Variant::Unlock, 3, 5, 0.1, 40.0, 0.5, 0).unwrap();
        spec.delta = 1.0;
        let mut env = FixedStream::new(Vec::new());
        assert!(matches!(run(&mut env, &spec), Err(OcpError::Domain { .. })));
        spec.delta = 0.05;
        spec.horizon = 0;
        assert!(run(&mut env, &spec).is_err());
    }
}
