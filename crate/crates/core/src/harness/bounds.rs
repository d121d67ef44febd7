use serde::{Deserialize, Serialize};

use super::StepRecord;
use crate::error::{OcpError, Result};
use crate::grid_loss::{LossParams, MiscoverBit};
use crate::learners::{Strategy, Variant};

/// Per-round estimator constant of the Unlock+ analysis:
/// `1 + (1 if covered else |arms below pi_t|) + P(not covered) / P(covered)`,
/// where "covered" is the set of arms whose sets contain the true label.
pub fn unlock_plus_c_t(arm: usize, m: MiscoverBit, covered: usize, strategy: &Strategy) -> f64 {
    let inside = strategy.mass(0..covered);
    let outside = strategy.mass(covered..strategy.len());
    let locked = if m.is_covered() { 1.0 } else { arm as f64 };
    let ratio = if outside == 0.0 {
        0.0
    } else if inside == 0.0 {
        f64::INFINITY
    } else {
        outside / inside
    };
    1.0 + locked + ratio
}

/// `min(mean C_t, K)` over a log.
pub fn unlock_plus_constant(records: &[StepRecord], k: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(OcpError::EmptyLog);
    }
    let mean = records.iter().map(|r| r.c_t).sum::<f64>() / records.len() as f64;
    Ok(mean.min(k as f64))
}

/// Reported high-probability bound on `MC - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rhs: f64,
    /// The bound cannot say anything because `MC - alpha <= 1 - alpha` anyway.
    pub vacuous: bool,
}

/// Right-hand side of the coverage-deviation bound for `variant`:
///
/// * Unlock+: `l_diff (sqrt(C ln K / T) + 4.15 sqrt(K ln K / T) + sqrt(K / (T ln K)) ln(1/delta) + 2 s) + C_mc`
/// * Unlock: `l_diff (5.15 sqrt(K ln K / T) + sqrt(K / (T ln K)) ln(1/delta) + s) + C_mc`
/// * Bandit and EXP3.P: the Unlock form without `s`.
///
/// `s` is the loss scale and `C` the Unlock+ constant (ignored otherwise).
pub fn theorem_bound_rhs(
    variant: Variant,
    k: usize,
    horizon: usize,
    delta: f64,
    params: &LossParams,
    c_const: f64,
    c_mc: f64,
) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(OcpError::Domain {
            name: "delta",
            value: delta,
            range: "(0, 1)",
        });
    }
    if k < 2 || horizon == 0 {
        return Err(OcpError::InvalidParam(format!(
            "bound needs K >= 2 and T >= 1, got K={k}, T={horizon}"
        )));
    }
    let kf = k as f64;
    let tf = horizon as f64;
    let ln_k = kf.ln();
    let confidence = (kf / (tf * ln_k)).sqrt() * (1.0 / delta).ln();
    let spread = (kf * ln_k / tf).sqrt();
    let s = params.scale();
    let inner = match variant {
        Variant::UnlockPlus => (c_const * ln_k / tf).sqrt() + 4.15 * spread + confidence + 2.0 * s,
        Variant::Unlock => 5.15 * spread + confidence + s,
        Variant::Bandit | Variant::Exp3P => 5.15 * spread + confidence,
    };
    let rhs = params.loss_diff() * inner + c_mc;
    if !rhs.is_finite() {
        return Err(OcpError::NonFinite("bound"));
    }
    Ok(BoundReport {
        rhs,
        vacuous: rhs >= 1.0 - params.alpha(),
    })
}
