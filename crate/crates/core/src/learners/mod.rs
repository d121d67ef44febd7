//! EXP3.P-style learners over the threshold grid.
//!
//! All variants share the same strategy: exponential weights on the
//! cumulative estimated gains mixed with a uniform floor `gamma / K`. They
//! differ only in how a round's feedback is turned into a gain-estimate
//! vector (see [`estimators`]).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OcpError, Result};
use crate::grid_loss::{LossParams, MiscoverBit, ThresholdGrid};

pub mod estimators;

pub use estimators::{
    estimator_bandit, estimator_exp3p, estimator_unlock, estimator_unlock_plus,
    unlock_reward_range,
};

/// Largest exploration mix the schedule will emit.
pub const GAMMA_CLAMP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Plain EXP3.P estimator `(g 1{arm} + beta) / p`.
    #[serde(rename = "exp3p")]
    Exp3P,
    #[serde(rename = "bandit")]
    Bandit,
    #[serde(rename = "unlock")]
    Unlock,
    #[serde(rename = "unlock-plus")]
    UnlockPlus,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Exp3P,
        Variant::Bandit,
        Variant::Unlock,
        Variant::UnlockPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exp3P => "exp3p",
            Variant::Bandit => "bandit",
            Variant::Unlock => "unlock",
            Variant::UnlockPlus => "unlock-plus",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = OcpError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                OcpError::InvalidParam(format!(
                    "unknown algorithm '{s}', expected one of exp3p, bandit, unlock, unlock-plus"
                ))
            })
    }
}

/// Learning rate, exploration mix and estimator bonus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Set when the schedule's gamma exceeded [`GAMMA_CLAMP`] and was clamped.
    pub gamma_clamped: bool,
}

impl HyperParams {
    pub fn new(eta: f64, gamma: f64, beta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(OcpError::Domain {
                name: "eta",
                value: eta,
                range: "(0, inf)",
            });
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(OcpError::Domain {
                name: "gamma",
                value: gamma,
                range: "[0, 1)",
            });
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(OcpError::Domain {
                name: "beta",
                value: beta,
                range: "(0, 1]",
            });
        }
        Ok(Self {
            eta,
            gamma,
            beta,
            gamma_clamped: false,
        })
    }

    /// High-probability schedule for a known horizon:
    /// `beta = sqrt(ln K / (K T))`, `gamma = 1.05 sqrt(K ln K / T)`,
    /// `eta = 0.95 sqrt(ln K / (K T))`.
    pub fn theorem_schedule(k: usize, horizon: usize) -> Result<Self> {
        if k < 2 || horizon == 0 {
            return Err(OcpError::InvalidParam(format!(
                "schedule needs K >= 2 and T >= 1, got K={k}, T={horizon}"
            )));
        }
        let kf = k as f64;
        let tf = horizon as f64;
        let ln_k = kf.ln();
        let beta = (ln_k / (kf * tf)).sqrt();
        let raw_gamma = 1.05 * (kf * ln_k / tf).sqrt();
        let eta = 0.95 * (ln_k / (kf * tf)).sqrt();
        let gamma_clamped = raw_gamma > GAMMA_CLAMP;
        Ok(Self {
            eta,
            gamma: raw_gamma.min(GAMMA_CLAMP),
            beta: beta.min(1.0),
            gamma_clamped,
        })
    }
}

/// A probability vector over the arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    probs: Vec<f64>,
}

impl Strategy {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(OcpError::InvalidParam("empty strategy".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(OcpError::InvalidParam(
                "strategy entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OcpError::InvalidParam(format!(
                "strategy sums to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, arm: usize) -> f64 {
        self.probs[arm]
    }

    /// Total mass of a contiguous block of arms.
    pub fn mass(&self, arms: Range<usize>) -> f64 {
        self.probs[arms].iter().sum()
    }

    /// Inverse-CDF lookup for a uniform draw `u` in `[0, 1)`.
    ///
    /// Buckets are scanned in grid order and a draw that lands exactly on a
    /// cumulative boundary goes to the lower bucket. Zero-mass arms are never
    /// returned.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            cum += p;
            last_positive = i;
            if u <= cum {
                return i;
            }
        }
        last_positive
    }
}

/// Draw an arm from `strategy` with a single uniform draw.
pub fn sample_arm<R: Rng + ?Sized>(strategy: &Strategy, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    strategy.sample_index(u)
}

/// Arms whose outcome is inferable after playing `arm` with outcome `m`.
///
/// On coverage the true score is revealed and every arm is unlocked; on
/// miscoverage every arm at or above the played one must also miscover.
pub fn unlocking_set(arm: usize, m: MiscoverBit, grid: &ThresholdGrid) -> Range<usize> {
    if m.is_covered() {
        0..grid.len()
    } else {
        arm..grid.len()
    }
}

/// Cumulative estimated gains plus the hyperparameters that act on them.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    cum_gain: Vec<f64>,
    hyper: HyperParams,
    variant: Variant,
}

impl LearnerState {
    pub fn new(k: usize, hyper: HyperParams, variant: Variant) -> Self {
        Self {
            cum_gain: vec![0.0; k],
            hyper,
            variant,
        }
    }

    /// Start from given cumulative gains instead of zeros.
    pub fn with_cum_gain(cum_gain: Vec<f64>, hyper: HyperParams, variant: Variant) -> Result<Self> {
        if cum_gain.iter().any(|g| !g.is_finite()) {
            return Err(OcpError::NonFinite("initial cumulative gain"));
        }
        Ok(Self {
            cum_gain,
            hyper,
            variant,
        })
    }

    pub fn cum_gain(&self) -> &[f64] {
        &self.cum_gain
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn k(&self) -> usize {
        self.cum_gain.len()
    }

    /// `(1 - gamma) softmax(eta G) + gamma / K`, with the max subtracted
    /// before exponentiating.
    pub fn strategy(&self) -> Strategy {
        let eta = self.hyper.eta;
        let gamma = self.hyper.gamma;
        let k = self.cum_gain.len() as f64;
        let top = self
            .cum_gain
            .iter()
            .map(|g| eta * g)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self.cum_gain.iter().map(|g| (eta * g - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights
            .into_iter()
            .map(|w| (1.0 - gamma) * w / total + gamma / k)
            .collect();
        Strategy { probs }
    }

    /// Add a gain-estimate vector to the cumulative gains.
    pub fn update(&mut self, estimate: &[f64]) -> Result<()> {
        if estimate.len() != self.cum_gain.len() {
            return Err(OcpError::InvalidParam(format!(
                "estimate has {} entries, learner has {} arms",
                estimate.len(),
                self.cum_gain.len()
            )));
        }
        if estimate.iter().any(|e| !e.is_finite()) {
            return Err(OcpError::NonFinite("gain estimate"));
        }
        for (g, e) in self.cum_gain.iter_mut().zip(estimate) {
            *g += e;
        }
        if self.cum_gain.iter().any(|g| !g.is_finite()) {
            return Err(OcpError::NonFinite("cumulative gain"));
        }
        Ok(())
    }
}

/// What the learner is told after playing an arm.
///
/// The true label's score comes back only when the played set covered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    m: MiscoverBit,
    f_star_revealed: Option<f64>,
}

impl Feedback {
    pub fn new(m: MiscoverBit, f_star_revealed: Option<f64>) -> Result<Self> {
        match (m.is_covered(), f_star_revealed) {
            (true, Some(f)) if (0.0..=1.0).contains(&f) => Ok(Self { m, f_star_revealed }),
            (false, None) => Ok(Self { m, f_star_revealed }),
            _ => Err(OcpError::InvalidParam(
                "the score is revealed exactly when the played arm covers".into(),
            )),
        }
    }

    /// Mask full knowledge of `f_star` down to what playing `pi` reveals.
    pub fn observe(f_star: f64, pi: f64) -> Result<Self> {
        let m = crate::grid_loss::miscoverage_bit(f_star, pi)?;
        let revealed = m.is_covered().then_some(f_star);
        Ok(Self {
            m,
            f_star_revealed: revealed,
        })
    }

    pub fn m(&self) -> MiscoverBit {
        self.m
    }

    pub fn f_star_revealed(&self) -> Option<f64> {
        self.f_star_revealed
    }
}

/// How much of a round's outcome the learner may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackRule {
    /// Unlocking sets as defined by the protocol.
    #[default]
    SemiBandit,
    /// Unlocking set forced to the played arm alone.
    BanditOnly,
}

/// A learner bound to a grid and loss: it plays arms and digests feedback.
///
/// The learner only ever sees [`Feedback`]; set sizes and unplayed losses
/// stay with the harness.
#[derive(Debug, Clone)]
pub struct Learner {
    grid: ThresholdGrid,
    params: LossParams,
    state: LearnerState,
    rule: FeedbackRule,
    pending: Option<(usize, Strategy)>,
}

impl Learner {
    pub fn new(variant: Variant, grid: ThresholdGrid, params: LossParams, hyper: HyperParams) -> Self {
        let state = LearnerState::new(grid.len(), hyper, variant);
        Self::from_state(state, grid, params).expect("fresh state matches grid")
    }

    pub fn from_state(state: LearnerState, grid: ThresholdGrid, params: LossParams) -> Result<Self> {
        if state.k() != grid.len() {
            return Err(OcpError::InvalidParam(format!(
                "learner state has {} arms, grid has {}",
                state.k(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            params,
            state,
            rule: FeedbackRule::SemiBandit,
            pending: None,
        })
    }

    pub fn with_feedback_rule(mut self, rule: FeedbackRule) -> Result<Self> {
        if rule == FeedbackRule::BanditOnly && self.state.variant() == Variant::UnlockPlus {
            return Err(OcpError::InvalidParam(
                "unlock-plus needs semi-bandit feedback".into(),
            ));
        }
        self.rule = rule;
        Ok(self)
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    pub fn params(&self) -> &LossParams {
        &self.params
    }

    /// Strategy of the round in progress, if an arm has been played.
    pub fn pending_strategy(&self) -> Option<&Strategy> {
        self.pending.as_ref().map(|(_, s)| s)
    }

    /// Compute the strategy and sample this round's arm.
    pub fn act<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let strategy = self.state.strategy();
        let arm = sample_arm(&strategy, rng);
        self.pending = Some((arm, strategy));
        arm
    }

    /// Fold the round's feedback into the cumulative gains; returns the
    /// estimate vector that was applied.
    pub fn observe(&mut self, feedback: &Feedback) -> Result<Vec<f64>> {
        let (arm, strategy) = self
            .pending
            .take()
            .ok_or_else(|| OcpError::InvalidParam("observe called before act".into()))?;
        let estimate = self.estimate(arm, feedback, &strategy)?;
        self.state.update(&estimate)?;
        Ok(estimate)
    }

    fn estimate(&self, arm: usize, feedback: &Feedback, strategy: &Strategy) -> Result<Vec<f64>> {
        let beta = self.state.hyper().beta;
        let m = feedback.m();
        let pi = self.grid.value(arm);
        let played_gain = self.params.gain(pi, m);
        match self.state.variant() {
            Variant::Exp3P => Ok(estimator_exp3p(arm, played_gain, strategy, beta)),
            Variant::Bandit => Ok(estimator_bandit(arm, played_gain, strategy, beta)),
            Variant::Unlock => {
                let (rewarded, gains) = match self.rule {
                    FeedbackRule::BanditOnly => {
                        let mut gains = vec![f64::NAN; self.grid.len()];
                        gains[arm] = played_gain;
                        (arm..arm + 1, gains)
                    }
                    FeedbackRule::SemiBandit => {
                        let covered = self.covered_count(feedback)?;
                        (unlock_reward_range(arm, m, covered, self.grid.len()), self.unlocked_gains(arm, m, covered))
                    }
                };
                estimator_unlock(rewarded, &gains, strategy, beta)
            }
            Variant::UnlockPlus => {
                let covered = self.covered_count(feedback)?;
                let gains = self.unlocked_gains(arm, m, covered);
                let pseudo: Vec<f64> = self
                    .grid
                    .values()
                    .iter()
                    .map(|&p| self.params.pseudo_gain(p))
                    .collect();
                estimator_unlock_plus(arm, m, covered, &gains, &pseudo, strategy, beta)
            }
        }
    }

    /// `|Pi*|` when the score was revealed, 0 otherwise.
    fn covered_count(&self, feedback: &Feedback) -> Result<usize> {
        match feedback.f_star_revealed() {
            Some(f) => Ok(self.grid.covered_count(f)),
            None if feedback.m().is_miscovered() => Ok(0),
            None => Err(OcpError::InvalidParam("covered feedback without score".into())),
        }
    }

    /// Gains on the unlocking set; NaN marks arms the learner cannot evaluate.
    fn unlocked_gains(&self, arm: usize, m: MiscoverBit, covered: usize) -> Vec<f64> {
        let unlocked = unlocking_set(arm, m, &self.grid);
        self.grid
            .values()
            .iter()
            .enumerate()
            .map(|(i, &pi)| {
                if !unlocked.contains(&i) {
                    f64::NAN
                } else if i < covered {
                    self.params.gain(pi, MiscoverBit::COVERED)
                } else {
                    self.params.gain(pi, MiscoverBit::MISCOVERED)
                }
            })
            .collect()
    }
}
