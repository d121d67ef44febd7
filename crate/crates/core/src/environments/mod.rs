//! Ground-truth generators.
//!
//! An environment emits, per round, the true label's conformity score and the
//! conformal set size at every grid threshold. The harness keeps this full
//! view to itself and hands the learner a masked [`Feedback`](crate::learners::Feedback).
//!
//! Synthetic environments build explicit label scores (the true label plus
//! decoys) and count set sizes from them, so a covered true label is always
//! one of the counted labels. True scores are rounded to [`SCORE_DECIMALS`]
//! fractional digits, which is exactly what the replay format stores.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, OcpError, Result};
use crate::grid_loss::{MiscoverBit, ThresholdGrid};
use crate::rng::{stream, ENV_STREAM};

mod adaptive;
mod replay;
mod synthetic;

pub use adaptive::AdaptiveEnv;
pub use replay::{write_replay, ReplayEnv, ReplayReader, REPLAY_HEADER};
pub use synthetic::{CovariateShiftEnv, ExponentScheduleEnv, IidEnv};

/// Fractional digits kept on true-label scores.
pub const SCORE_DECIMALS: i32 = 9;

/// Round a score to the precision the replay format carries.
pub fn quantize_score(score: f64) -> f64 {
    let scale = 10f64.powi(SCORE_DECIMALS);
    ((score * scale).round() / scale).clamp(0.0, 1.0)
}

/// Full-knowledge record of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTruth {
    pub t: usize,
    pub f_star: f64,
    /// `|C_{pi_i}(x_t)|` for each grid threshold, nonincreasing in `i`.
    pub set_sizes: Vec<u32>,
}

impl StepTruth {
    pub fn validate(&self, k: usize) -> Result<()> {
        check_unit("f_star", self.f_star)?;
        if self.set_sizes.len() != k {
            return Err(OcpError::InvalidParam(format!(
                "step {} has {} set sizes, grid has {k} arms",
                self.t,
                self.set_sizes.len()
            )));
        }
        if self.set_sizes.windows(2).any(|w| w[0] < w[1]) {
            return Err(OcpError::InvalidParam(format!(
                "step {}: set sizes must be nonincreasing",
                self.t
            )));
        }
        Ok(())
    }

    /// Whether the true label is outside the set at `arm`.
    pub fn miscovers(&self, grid: &ThresholdGrid, arm: usize) -> MiscoverBit {
        if self.f_star < grid.value(arm) {
            MiscoverBit::MISCOVERED
        } else {
            MiscoverBit::COVERED
        }
    }
}

/// Count, for every threshold, the labels whose score reaches it.
pub fn count_set_sizes(scores: &[f64], grid: &ThresholdGrid) -> Vec<u32> {
    let k = grid.len();
    // by_reach[j]: labels included at exactly the first j thresholds
    let mut by_reach = vec![0u32; k + 1];
    for &s in scores {
        by_reach[grid.covered_count(s)] += 1;
    }
    let mut sizes = vec![0u32; k];
    let mut running = 0u32;
    for i in (0..k).rev() {
        running += by_reach[i + 1];
        sizes[i] = running;
    }
    sizes
}

/// A source of per-round ground truth.
pub trait Environment: Send {
    /// Truth for round `t` (1-based); `None` once a finite stream is exhausted.
    fn next_truth(&mut self, t: usize) -> Result<Option<StepTruth>>;

    /// Tell the environment what the learner played. Only adaptive
    /// adversaries care.
    fn observe_play(&mut self, _arm: usize, _pi: f64, _m: MiscoverBit) {}
}

fn default_labels() -> usize {
    1000
}

fn default_regression_bins() -> usize {
    20
}

fn one() -> f64 {
    1.0
}

/// i.i.d. label scores drawn from `Beta(beta_a, beta_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidParams {
    #[serde(default = "default_labels")]
    pub labels: usize,
    #[serde(default = "one")]
    pub beta_a: f64,
    #[serde(default = "one")]
    pub beta_b: f64,
}

impl Default for IidParams {
    fn default() -> Self {
        Self {
            labels: default_labels(),
            beta_a: 1.0,
            beta_b: 1.0,
        }
    }
}

fn default_exponents() -> Vec<f64> {
    vec![1.0 / 6.0, 1.0 / 4.0, 1.0 / 2.0, 1.0 / 1.2, 1.0 / 3.0]
}

fn default_phase_length() -> usize {
    10_000
}

/// Base scores raised to a phase-dependent exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentParams {
    #[serde(default = "default_labels")]
    pub labels: usize,
    #[serde(default = "one")]
    pub beta_a: f64,
    #[serde(default = "one")]
    pub beta_b: f64,
    /// Rounds per phase; phase `j` covers rounds `j * len + 1 ..= (j + 1) * len`.
    #[serde(default = "default_phase_length")]
    pub phase_length: usize,
    /// One exponent per phase; the last one holds for all later rounds.
    #[serde(default = "default_exponents")]
    pub exponents: Vec<f64>,
}

impl Default for ExponentParams {
    fn default() -> Self {
        Self {
            labels: default_labels(),
            beta_a: 1.0,
            beta_b: 1.0,
            phase_length: default_phase_length(),
            exponents: default_exponents(),
        }
    }
}

impl ExponentParams {
    /// Exponent in force at round `t` (1-based).
    pub fn exponent_at(&self, t: usize) -> f64 {
        let phase = t.saturating_sub(1) / self.phase_length.max(1);
        self.exponents[phase.min(self.exponents.len() - 1)]
    }
}

/// Residual model of one covariate regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// Standard deviation of the standardized residual `|y - y_hat| / width`.
    pub noise_sd: f64,
    /// Local interval half-width is drawn uniformly from `[width_lo, width_hi]`.
    pub width_lo: f64,
    pub width_hi: f64,
}

fn default_pre_regime() -> Regime {
    Regime {
        noise_sd: 0.15,
        width_lo: 0.5,
        width_hi: 1.0,
    }
}

fn default_post_regime() -> Regime {
    Regime {
        noise_sd: 0.3,
        width_lo: 0.5,
        width_hi: 1.0,
    }
}

fn default_shift_fraction() -> f64 {
    1.0 / 3.0
}

/// Regression analogue whose residual distribution changes part-way through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftParams {
    /// Label universe: `labels - 1` response bins plus the realized response.
    #[serde(default = "default_regression_bins")]
    pub labels: usize,
    #[serde(default = "default_shift_fraction")]
    pub shift_fraction: f64,
    #[serde(default = "default_pre_regime")]
    pub pre: Regime,
    #[serde(default = "default_post_regime")]
    pub post: Regime,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            labels: default_regression_bins(),
            shift_fraction: default_shift_fraction(),
            pre: default_pre_regime(),
            post: default_post_regime(),
        }
    }
}

impl ShiftParams {
    /// Last pre-shift round (1-based) for a horizon.
    pub fn boundary(&self, horizon: usize) -> usize {
        (self.shift_fraction * horizon as f64).round() as usize
    }
}

fn default_window() -> usize {
    100
}

fn default_margin() -> f64 {
    0.04
}

/// Adversary that places the true score just below the learner's favourite arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveParams {
    #[serde(default = "default_labels")]
    pub labels: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Offset below the tracked arm, as a fraction of the gap to the next
    /// lower grid point.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            labels: default_labels(),
            window: default_window(),
            margin: default_margin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayParams {
    pub path: PathBuf,
}

/// Environment kind plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Iid(IidParams),
    #[serde(alias = "exponent-schedule")]
    Exponent(ExponentParams),
    #[serde(alias = "covariate-shift")]
    Shift(ShiftParams),
    #[serde(alias = "adaptive-threshold-tracker")]
    Adaptive(AdaptiveParams),
    Replay(ReplayParams),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Iid(IidParams::default())
    }
}

impl EnvSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EnvSpec::Iid(_) => "iid",
            EnvSpec::Exponent(_) => "exponent",
            EnvSpec::Shift(_) => "shift",
            EnvSpec::Adaptive(_) => "adaptive",
            EnvSpec::Replay(_) => "replay",
        }
    }

    /// Parse the short CLI form: `iid`, `exponent`, `shift`, `adaptive`, `replay:PATH`.
    pub fn from_short(name: &str) -> Result<Self> {
        if let Some(path) = name.strip_prefix("replay:") {
            return Ok(EnvSpec::Replay(ReplayParams { path: path.into() }));
        }
        match name {
            "iid" => Ok(EnvSpec::Iid(IidParams::default())),
            "exponent" => Ok(EnvSpec::Exponent(ExponentParams::default())),
            "shift" => Ok(EnvSpec::Shift(ShiftParams::default())),
            "adaptive" => Ok(EnvSpec::Adaptive(AdaptiveParams::default())),
            other => Err(OcpError::InvalidParam(format!(
                "unknown environment '{other}', expected iid, exponent, shift, adaptive or replay:PATH"
            ))),
        }
    }

    pub fn validate(&self, grid: &ThresholdGrid) -> Result<()> {
        fn labels_ok(labels: usize) -> Result<()> {
            if labels < 2 {
                return Err(OcpError::InvalidParam(format!(
                    "environment needs at least 2 labels, got {labels}"
                )));
            }
            Ok(())
        }
        fn beta_ok(a: f64, b: f64) -> Result<()> {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(OcpError::InvalidParam(format!(
                    "Beta parameters must be positive, got ({a}, {b})"
                )));
            }
            Ok(())
        }
        match self {
            EnvSpec::Iid(p) => {
                labels_ok(p.labels)?;
                beta_ok(p.beta_a, p.beta_b)
            }
            EnvSpec::Exponent(p) => {
                labels_ok(p.labels)?;
                beta_ok(p.beta_a, p.beta_b)?;
                if p.exponents.is_empty() || p.phase_length == 0 {
                    return Err(OcpError::InvalidParam(
                        "exponent schedule needs at least one phase of positive length".into(),
                    ));
                }
                if p.exponents.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(OcpError::InvalidParam("exponents must be positive".into()));
                }
                Ok(())
            }
            EnvSpec::Shift(p) => {
                labels_ok(p.labels)?;
                if !(p.shift_fraction > 0.0 && p.shift_fraction < 1.0) {
                    return Err(OcpError::Domain {
                        name: "shift_fraction",
                        value: p.shift_fraction,
                        range: "(0, 1)",
                    });
                }
                for r in [p.pre, p.post] {
                    if !(r.noise_sd > 0.0 && r.noise_sd.is_finite()) {
                        return Err(OcpError::InvalidParam("noise_sd must be positive".into()));
                    }
                    if !(r.width_lo > 0.0 && r.width_lo <= r.width_hi && r.width_hi.is_finite()) {
                        return Err(OcpError::InvalidParam(
                            "widths must satisfy 0 < width_lo <= width_hi".into(),
                        ));
                    }
                }
                Ok(())
            }
            EnvSpec::Adaptive(p) => {
                labels_ok(p.labels)?;
                if p.window == 0 {
                    return Err(OcpError::InvalidParam("window must be positive".into()));
                }
                if !(p.margin > 0.0 && p.margin < 1.0) {
                    return Err(OcpError::Domain {
                        name: "margin",
                        value: p.margin,
                        range: "(0, 1)",
                    });
                }
                if p.margin * grid.min_spacing() < 1e-8 {
                    return Err(OcpError::InvalidParam(
                        "margin times grid spacing is below the score resolution".into(),
                    ));
                }
                Ok(())
            }
            EnvSpec::Replay(_) => Ok(()),
        }
    }

    /// Whether the stream depends on what the learner plays.
    pub fn is_adaptive(&self) -> bool {
        matches!(self, EnvSpec::Adaptive(_))
    }

    /// Instantiate for a run of `horizon` rounds seeded with `seed`.
    pub fn build(
        &self,
        grid: &ThresholdGrid,
        horizon: usize,
        seed: u64,
    ) -> Result<Box<dyn Environment>> {
        self.validate(grid)?;
        let rng = stream(seed, ENV_STREAM);
        Ok(match self {
            EnvSpec::Iid(p) => Box::new(IidEnv::new(p.clone(), grid.clone(), rng)?),
            EnvSpec::Exponent(p) => Box::new(ExponentScheduleEnv::new(p.clone(), grid.clone(), rng)?),
            EnvSpec::Shift(p) => {
                Box::new(CovariateShiftEnv::new(p.clone(), grid.clone(), horizon, rng))
            }
            EnvSpec::Adaptive(p) => Box::new(AdaptiveEnv::new(p.clone(), grid.clone(), rng)?),
            EnvSpec::Replay(p) => Box::new(ReplayEnv::open(&p.path, grid.len())?),
        })
    }
}

/// Environment over a fixed in-memory sequence of truths.
#[derive(Debug, Clone)]
pub struct FixedStream {
    truths: std::vec::IntoIter<StepTruth>,
}

impl FixedStream {
    pub fn new(truths: Vec<StepTruth>) -> Self {
        Self {
            truths: truths.into_iter(),
        }
    }
}

impl Environment for FixedStream {
    fn next_truth(&mut self, _t: usize) -> Result<Option<StepTruth>> {
        Ok(self.truths.next())
    }
}
