//! Threshold grid and the conformal loss.
//!
//! The arm space is a finite grid of thresholds in `[0, 1]`. A label is kept
//! in the conformal set at threshold `pi` when its score is at least `pi`, so
//! raising the threshold shrinks the set and can only turn coverage into
//! miscoverage.
//!
//! The loss of an arm is a miscoverage term plus a small inefficiency term:
//!
//! ```text
//! d(m)      = alpha + alpha (1 - alpha)                  if m = 0
//!           = 1 - alpha (1 - alpha)                      if m = 1
//! a(pi, m)  = -c alpha (1 + pi^2 / (1 - alpha)) s        if m = 0
//!           = -c alpha s / (1 + alpha (1 - 2 alpha) pi)  if m = 1
//! ```
//!
//! where `s` is the horizon-dependent decay scale. Every loss on `[0, 1]`
//! falls in `[loss_min, loss_max]`, which the gain normalization relies on.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, OcpError, Result};

/// Tolerance for loss values slightly outside `[loss_min, loss_max]`.
pub const GAIN_TOLERANCE: f64 = 1e-12;

/// Ordered thresholds `pi_0 < pi_1 < ... < pi_{K-1}` inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    /// `K` evenly spaced thresholds `i / (K - 1)`, both endpoints included.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(OcpError::InvalidParam(format!(
                "grid needs K >= 2 arms, got {k}"
            )));
        }
        let denom = (k - 1) as f64;
        let values = (0..k).map(|i| i as f64 / denom).collect();
        Ok(Self { values })
    }

    /// Arbitrary strictly increasing thresholds in `[0, 1]`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(OcpError::InvalidParam(format!(
                "grid needs K >= 2 arms, got {}",
                values.len()
            )));
        }
        for &v in &values {
            check_unit("threshold", v)?;
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OcpError::InvalidParam(
                "grid thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, arm: usize) -> f64 {
        self.values[arm]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of arms whose set contains a label of score `f_star`.
    ///
    /// Covered arms form a prefix of the grid, so this is `|Pi*|` and
    /// arms `0..covered_count` are exactly the covered ones.
    pub fn covered_count(&self, f_star: f64) -> usize {
        let k = self.values.len();
        let lo = self.values[0];
        let hi = self.values[k - 1];
        if f_star.is_nan() || f_star < lo {
            return 0;
        }
        if f_star >= hi {
            return k;
        }
        // Interpolated guess, exact for uniform grids up to rounding, then corrected.
        let guess = ((f_star - lo) / (hi - lo) * (k - 1) as f64).floor() as usize;
        let mut count = (guess + 1).min(k);
        while count < k && self.values[count] <= f_star {
            count += 1;
        }
        while count > 0 && self.values[count - 1] > f_star {
            count -= 1;
        }
        count
    }

    /// Smallest gap between consecutive thresholds.
    pub fn min_spacing(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Miscoverage indicator `m_t(pi)`: 1 when the true label is outside the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MiscoverBit(bool);

impl MiscoverBit {
    pub const COVERED: MiscoverBit = MiscoverBit(false);
    pub const MISCOVERED: MiscoverBit = MiscoverBit(true);

    pub fn from_u8(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Self::COVERED),
            1 => Ok(Self::MISCOVERED),
            other => Err(OcpError::InvalidParam(format!(
                "miscoverage bit must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }

    pub fn is_miscovered(self) -> bool {
        self.0
    }

    pub fn is_covered(self) -> bool {
        !self.0
    }
}

/// `1` iff the label with score `f_star` is excluded at threshold `pi`.
///
/// Inclusion requires `f_star >= pi`, so a tie counts as covered.
pub fn miscoverage_bit(f_star: f64, pi: f64) -> Result<MiscoverBit> {
    check_unit("f_star", f_star)?;
    check_unit("pi", pi)?;
    Ok(MiscoverBit(f_star < pi))
}

/// Loss hyperparameters with the loss range precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    alpha: f64,
    c: f64,
    scale: f64,
    loss_min: f64,
    loss_max: f64,
}

impl LossParams {
    pub fn new(alpha: f64, c: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(OcpError::Domain {
                name: "alpha",
                value: alpha,
                range: "(0, 0.5)",
            });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(OcpError::Domain {
                name: "c",
                value: c,
                range: "(0, inf)",
            });
        }
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(OcpError::Domain {
                name: "scale",
                value: scale,
                range: "(0, 1]",
            });
        }
        let ca = c * alpha;
        let loss_max = 1.0 - alpha * (1.0 - alpha) - ca / (1.0 + alpha * (1.0 - 2.0 * alpha)) * scale;
        let loss_min = alpha + alpha * (1.0 - alpha) - (1.0 + 1.0 / (1.0 - alpha)) * ca * scale;
        if loss_min >= loss_max {
            return Err(OcpError::InvalidParam(format!(
                "degenerate loss range [{loss_min}, {loss_max}]"
            )));
        }
        Ok(Self {
            alpha,
            c,
            scale,
            loss_min,
            loss_max,
        })
    }

    /// Parameters for a known horizon with decay scale `T^(-rho)`.
    pub fn for_horizon(alpha: f64, c: f64, horizon: usize, rho: f64) -> Result<Self> {
        Self::new(alpha, c, decay_scale(horizon, rho)?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn loss_min(&self) -> f64 {
        self.loss_min
    }

    pub fn loss_max(&self) -> f64 {
        self.loss_max
    }

    /// `loss_max - loss_min`.
    pub fn loss_diff(&self) -> f64 {
        self.loss_max - self.loss_min
    }

    /// Miscoverage term, depends on `alpha` only.
    pub fn d_term(&self, m: MiscoverBit) -> f64 {
        let a = self.alpha;
        if m.is_miscovered() {
            1.0 - a * (1.0 - a)
        } else {
            a + a * (1.0 - a)
        }
    }

    /// Inefficiency term. Always negative.
    pub fn a_term(&self, pi: f64, m: MiscoverBit) -> f64 {
        let a = self.alpha;
        let ca = self.c * a;
        if m.is_miscovered() {
            -(ca * self.scale) / (1.0 + a * (1.0 - 2.0 * a) * pi)
        } else {
            -ca * (1.0 + pi * pi / (1.0 - a)) * self.scale
        }
    }

    pub fn loss(&self, pi: f64, m: MiscoverBit) -> f64 {
        self.d_term(m) + self.a_term(pi, m)
    }

    /// Affine map of a loss value onto `[0, 1]`, 1 being the best loss.
    pub fn normalized_gain(&self, loss_value: f64) -> Result<f64> {
        let lo = self.loss_min - GAIN_TOLERANCE;
        let hi = self.loss_max + GAIN_TOLERANCE;
        if !(loss_value >= lo && loss_value <= hi) {
            return Err(OcpError::Domain {
                name: "loss",
                value: loss_value,
                range: "[loss_min, loss_max]",
            });
        }
        let g = (self.loss_max - loss_value) / self.loss_diff();
        Ok(g.clamp(0.0, 1.0))
    }

    /// Normalized gain of arm `pi` under outcome `m`.
    pub fn gain(&self, pi: f64, m: MiscoverBit) -> f64 {
        let g = (self.loss_max - self.loss(pi, m)) / self.loss_diff();
        g.clamp(0.0, 1.0)
    }

    /// Pseudo-loss of an arm whose outcome is not observable: its loss had it miscovered.
    pub fn pseudo_loss(&self, pi: f64) -> f64 {
        let a = self.alpha;
        1.0 - a * (1.0 - a) - (self.c * a) / (1.0 + a * (1.0 - 2.0 * a) * pi) * self.scale
    }

    pub fn pseudo_gain(&self, pi: f64) -> f64 {
        ((self.loss_max - self.pseudo_loss(pi)) / self.loss_diff()).clamp(0.0, 1.0)
    }
}

/// Decay scale `T^(-rho)` standing in for the vanishing factor on the inefficiency term.
pub fn decay_scale(horizon: usize, rho: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(OcpError::InvalidParam("horizon must be >= 1".into()));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(OcpError::Domain {
            name: "rho",
            value: rho,
            range: "[0, inf)",
        });
    }
    Ok((horizon as f64).powf(-rho))
}
