use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use super::{
    count_set_sizes, quantize_score, Environment, ExponentParams, IidParams, Regime, ShiftParams,
    StepTruth,
};
use crate::error::{OcpError, Result};
use crate::grid_loss::ThresholdGrid;
use crate::rng::RunRng;

/// Label-score sampler: plain uniform draws when `Beta(1, 1)`.
#[derive(Debug, Clone)]
pub(crate) enum ScoreSampler {
    Uniform,
    Beta(Beta<f64>),
}

impl ScoreSampler {
    pub(crate) fn new(a: f64, b: f64) -> Result<Self> {
        if a == 1.0 && b == 1.0 {
            Ok(ScoreSampler::Uniform)
        } else {
            Beta::new(a, b)
                .map(ScoreSampler::Beta)
                .map_err(|e| OcpError::InvalidParam(format!("Beta({a}, {b}): {e}")))
        }
    }

    pub(crate) fn sample(&self, rng: &mut RunRng) -> f64 {
        match self {
            ScoreSampler::Uniform => rng.random::<f64>(),
            ScoreSampler::Beta(d) => d.sample(rng),
        }
    }

    /// Fill `scores` with `labels` draws; slot 0 is the true label, quantized.
    pub(crate) fn fill(&self, rng: &mut RunRng, labels: usize, exponent: f64, scores: &mut Vec<f64>) {
        scores.clear();
        for _ in 0..labels {
            let s = self.sample(rng);
            scores.push(if exponent == 1.0 { s } else { s.powf(exponent) });
        }
        scores[0] = quantize_score(scores[0]);
    }
}

/// i.i.d. scores; the first of `labels` draws belongs to the true label.
#[derive(Debug)]
pub struct IidEnv {
    params: IidParams,
    grid: ThresholdGrid,
    sampler: ScoreSampler,
    rng: RunRng,
    scores: Vec<f64>,
}

impl IidEnv {
    pub fn new(params: IidParams, grid: ThresholdGrid, rng: RunRng) -> Result<Self> {
        let sampler = ScoreSampler::new(params.beta_a, params.beta_b)?;
        Ok(Self {
            scores: Vec::with_capacity(params.labels),
            params,
            grid,
            sampler,
            rng,
        })
    }
}

impl Environment for IidEnv {
    fn next_truth(&mut self, t: usize) -> Result<Option<StepTruth>> {
        self.sampler
            .fill(&mut self.rng, self.params.labels, 1.0, &mut self.scores);
        Ok(Some(StepTruth {
            t,
            f_star: self.scores[0],
            set_sizes: count_set_sizes(&self.scores, &self.grid),
        }))
    }
}

/// Scores transformed by `s -> s^a_t` with a piecewise-constant exponent.
#[derive(Debug)]
pub struct ExponentScheduleEnv {
    params: ExponentParams,
    grid: ThresholdGrid,
    sampler: ScoreSampler,
    rng: RunRng,
    scores: Vec<f64>,
}

impl ExponentScheduleEnv {
    pub fn new(params: ExponentParams, grid: ThresholdGrid, rng: RunRng) -> Result<Self> {
        let sampler = ScoreSampler::new(params.beta_a, params.beta_b)?;
        Ok(Self {
            scores: Vec::with_capacity(params.labels),
            params,
            grid,
            sampler,
            rng,
        })
    }
}

impl Environment for ExponentScheduleEnv {
    fn next_truth(&mut self, t: usize) -> Result<Option<StepTruth>> {
        let exponent = self.params.exponent_at(t);
        self.sampler
            .fill(&mut self.rng, self.params.labels, exponent, &mut self.scores);
        Ok(Some(StepTruth {
            t,
            f_star: self.scores[0],
            set_sizes: count_set_sizes(&self.scores, &self.grid),
        }))
    }
}

/// Regression analogue with a residual-distribution change at a fixed round.
///
/// Candidate responses sit on `labels - 1` evenly spaced bins across the
/// normalized residual range `(-1, 1)` around the prediction; each round
/// draws a local half-width `h` and a standardized residual `z`. A bin at
/// offset `o` scores `max(0, 1 - |o| / h)` and the realized response scores
/// `max(0, 1 - |z|)`. Set sizes count bins plus the realized response.
#[derive(Debug)]
pub struct CovariateShiftEnv {
    params: ShiftParams,
    grid: ThresholdGrid,
    boundary: usize,
    offsets: Vec<f64>,
    rng: RunRng,
    scores: Vec<f64>,
}

impl CovariateShiftEnv {
    pub fn new(params: ShiftParams, grid: ThresholdGrid, horizon: usize, rng: RunRng) -> Self {
        let bins = params.labels - 1;
        let width = 2.0 / bins as f64;
        let offsets = (0..bins).map(|j| -1.0 + (j as f64 + 0.5) * width).collect();
        Self {
            boundary: params.boundary(horizon),
            scores: Vec::with_capacity(params.labels),
            params,
            grid,
            offsets,
            rng,
        }
    }

    fn regime(&self, t: usize) -> Regime {
        if t <= self.boundary {
            self.params.pre
        } else {
            self.params.post
        }
    }
}

impl Environment for CovariateShiftEnv {
    fn next_truth(&mut self, t: usize) -> Result<Option<StepTruth>> {
        let regime = self.regime(t);
        let half_width = if regime.width_hi > regime.width_lo {
            self.rng.random_range(regime.width_lo..regime.width_hi)
        } else {
            regime.width_lo
        };
        let noise = Normal::new(0.0, regime.noise_sd)
            .map_err(|e| OcpError::InvalidParam(format!("noise_sd: {e}")))?;
        let z: f64 = noise.sample(&mut self.rng);
        let f_star = quantize_score((1.0 - z.abs()).max(0.0));
        self.scores.clear();
        self.scores.push(f_star);
        self.scores.extend(
            self.offsets
                .iter()
                .map(|o| (1.0 - o.abs() / half_width).max(0.0)),
        );
        Ok(Some(StepTruth {
            t,
            f_star,
            set_sizes: count_set_sizes(&self.scores, &self.grid),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::EnvSpec;
    use crate::grid_loss::miscoverage_bit;
    use crate::rng::{stream, ENV_STREAM};

    fn check_truth(truth: &StepTruth, grid: &ThresholdGrid, labels: u32) {
        truth.validate(grid.len()).unwrap();
        assert_eq!(truth.set_sizes[0], labels);
        for (i, &pi) in grid.values().iter().enumerate() {
            if miscoverage_bit(truth.f_star, pi).unwrap().is_covered() {
                assert!(truth.set_sizes[i] >= 1);
            }
        }
    }

    #[test]
    fn iid_set_sizes_track_uniform_survival() {
        let grid = ThresholdGrid::uniform(11).unwrap();
        let labels = 10;
        let params = IidParams {
            labels,
            ..IidParams::default()
        };
        let mut env = IidEnv::new(params, grid.clone(), stream(1, ENV_STREAM)).unwrap();
        let n = 100_000;
        let mut sums = vec![0.0f64; grid.len()];
        let mut sq = vec![0.0f64; grid.len()];
        for t in 1..=n {
            let truth = env.next_truth(t).unwrap().unwrap();
            check_truth(&truth, &grid, labels as u32);
            for (i, &s) in truth.set_sizes.iter().enumerate() {
                let frac = s as f64 / labels as f64;
                sums[i] += frac;
                sq[i] += frac * frac;
            }
        }
        for (i, &pi) in grid.values().iter().enumerate() {
            let mean = sums[i] / n as f64;
            let var = (sq[i] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt().max(1e-12);
            let expected = 1.0 - pi;
            // pi = 1 is hit only by scores of exactly 1.0
            if i == grid.len() - 1 {
                assert!(mean < 1e-6);
            } else {
                assert!((mean - expected).abs() <= 3.0 * se + 1e-12, "arm {i}: {mean} vs {expected}");
            }
        }
    }

    #[test]
    fn unit_exponent_matches_iid() {
        let grid = ThresholdGrid::uniform(20).unwrap();
        let iid = EnvSpec::Iid(IidParams::default());
        let flat = EnvSpec::Exponent(ExponentParams {
            exponents: vec![1.0],
            ..ExponentParams::default()
        });
        let mut a = iid.build(&grid, 100, 9).unwrap();
        let mut b = flat.build(&grid, 100, 9).unwrap();
        for t in 1..=100 {
            assert_eq!(a.next_truth(t).unwrap(), b.next_truth(t).unwrap());
        }
    }

    #[test]
    fn exponent_transform_value() {
        assert!((0.5f64.powf(1.0 / 6.0) - 0.8909).abs() < 1e-4);
    }

    #[test]
    fn small_exponents_push_scores_up() {
        let grid = ThresholdGrid::uniform(20).unwrap();
        let spec = |e: f64| {
            EnvSpec::Exponent(ExponentParams {
                exponents: vec![e],
                labels: 50,
                ..ExponentParams::default()
            })
        };
        let mean_f = |e: f64| {
            let mut env = spec(e).build(&grid, 10, 4).unwrap();
            (1..=2000)
                .map(|t| env.next_truth(t).unwrap().unwrap().f_star)
                .sum::<f64>()
                / 2000.0
        };
        assert!(mean_f(1.0 / 6.0) > mean_f(1.0 / 2.0));
        assert!(mean_f(1.0 / 2.0) > mean_f(1.0));
    }

    #[test]
    fn shift_raises_miscoverage_after_boundary() {
        let grid = ThresholdGrid::uniform(20).unwrap();
        let params = ShiftParams::default();
        let horizon = 30_000;
        let mut env = CovariateShiftEnv::new(params.clone(), grid.clone(), horizon, stream(2, ENV_STREAM));
        let pi = 0.7;
        let (mut pre, mut post) = ((0.0, 0usize), (0.0, 0usize));
        for t in 1..=horizon {
            let truth = env.next_truth(t).unwrap().unwrap();
            check_truth(&truth, &grid, params.labels as u32);
            let m = miscoverage_bit(truth.f_star, pi).unwrap().as_u8() as f64;
            if t <= params.boundary(horizon) {
                pre.0 += m;
                pre.1 += 1;
            } else {
                post.0 += m;
                post.1 += 1;
            }
        }
        assert_eq!(pre.1, 10_000);
        let (pre_rate, post_rate) = (pre.0 / pre.1 as f64, post.0 / post.1 as f64);
        let se = (pre_rate * (1.0 - pre_rate) / pre.1 as f64 + post_rate * (1.0 - post_rate) / post.1 as f64).sqrt();
        assert!(post_rate - pre_rate > 3.0 * se, "{pre_rate} -> {post_rate}");
    }

    #[test]
    fn no_shift_equals_stationary_stream() {
        let grid = ThresholdGrid::uniform(20).unwrap();
        let same = ShiftParams {
            post: ShiftParams::default().pre,
            ..ShiftParams::default()
        };
        let mut a = CovariateShiftEnv::new(same.clone(), grid.clone(), 300, stream(3, ENV_STREAM));
        let mut b = CovariateShiftEnv::new(same, grid.clone(), 900, stream(3, ENV_STREAM));
        for t in 1..=300 {
            assert_eq!(a.next_truth(t).unwrap(), b.next_truth(t).unwrap());
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let grid = ThresholdGrid::uniform(20).unwrap();
        for spec in [
            EnvSpec::Iid(IidParams { labels: 30, beta_a: 2.0, beta_b: 5.0 }),
            EnvSpec::Shift(ShiftParams::default()),
        ] {
            let mut a = spec.build(&grid, 50, 77).unwrap();
            let mut b = spec.build(&grid, 50, 77).unwrap();
            for t in 1..=50 {
                let ta = a.next_truth(t).unwrap().unwrap();
                check_truth(&ta, &grid, ta.set_sizes[0]);
                assert_eq!(Some(ta), b.next_truth(t).unwrap());
            }
        }
    }
}
