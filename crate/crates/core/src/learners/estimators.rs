//! Biased gain estimators.
//!
//! Each estimator maps one round of feedback to a length-K vector added to
//! the cumulative gains. `gains` slices are indexed by arm; entries outside
//! the round's unlocking set are never read (the learner fills them with NaN
//! so a leak would poison the update and be rejected).

use std::ops::Range;

use crate::error::{OcpError, Result};
use crate::grid_loss::MiscoverBit;

use super::Strategy;

/// EXP3.P: `(g 1{pi = arm} + beta) / p(pi)`.
pub fn estimator_exp3p(arm: usize, gain: f64, strategy: &Strategy, beta: f64) -> Vec<f64> {
    strategy
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let g = if i == arm { gain } else { 0.0 };
            (g + beta) / p
        })
        .collect()
}

/// OCP-Bandit: `g / p + beta / p` on the played arm, `beta / p` elsewhere.
///
/// Written as a sum of two quotients so that an unlocking set of one arm in
/// [`estimator_unlock`] reproduces it bit for bit.
pub fn estimator_bandit(arm: usize, gain: f64, strategy: &Strategy, beta: f64) -> Vec<f64> {
    strategy
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if i == arm {
                gain / p + beta / p
            } else {
                beta / p
            }
        })
        .collect()
}

/// Arms whose revealed gains OCP-Unlock credits: the covered prefix `Pi*`
/// on coverage, the unlocking set `arm..K` on miscoverage.
pub fn unlock_reward_range(arm: usize, m: MiscoverBit, covered: usize, k: usize) -> Range<usize> {
    if m.is_covered() {
        0..covered
    } else {
        arm..k
    }
}

/// OCP-Unlock: arms in `rewarded` get `g / P(rewarded) + beta / p`, the rest
/// `beta / p`.
pub fn estimator_unlock(
    rewarded: Range<usize>,
    gains: &[f64],
    strategy: &Strategy,
    beta: f64,
) -> Result<Vec<f64>> {
    if rewarded.is_empty() || rewarded.end > strategy.len() || gains.len() != strategy.len() {
        return Err(OcpError::InvalidParam(format!(
            "bad unlock inputs: rewarded {rewarded:?}, {} gains, {} arms",
            gains.len(),
            strategy.len()
        )));
    }
    let mass = strategy.mass(rewarded.clone());
    Ok(strategy
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if rewarded.contains(&i) {
                gains[i] / mass + beta / p
            } else {
                beta / p
            }
        })
        .collect())
}

/// OCP-Unlock+.
///
/// Coverage (`covered = |Pi*|`, all gains revealed):
/// - `pi` in `Pi*`: `g / P(Pi*) + (1 + 1 / P(Pi*)) beta`
/// - otherwise: `g + beta / P(pi' <= pi)`
///
/// Miscoverage (unlocking set `arm..K`):
/// - `pi` unlocked: `g + beta / P(pi' <= pi)`
/// - otherwise: `pseudo(pi) + (1 + 1 / p(pi)) beta`
///
/// Prefix masses include `pi` itself.
pub fn estimator_unlock_plus(
    arm: usize,
    m: MiscoverBit,
    covered: usize,
    gains: &[f64],
    pseudo: &[f64],
    strategy: &Strategy,
    beta: f64,
) -> Result<Vec<f64>> {
    let k = strategy.len();
    if gains.len() != k || pseudo.len() != k || arm >= k {
        return Err(OcpError::InvalidParam(format!(
            "bad unlock-plus inputs: arm {arm}, {} gains, {} pseudo-gains, {k} arms",
            gains.len(),
            pseudo.len()
        )));
    }
    if m.is_covered() && !(arm < covered && covered <= k) {
        return Err(OcpError::InvalidParam(format!(
            "covered round needs the played arm {arm} inside Pi* of size {covered}"
        )));
    }
    let probs = strategy.probs();
    let mut out = Vec::with_capacity(k);
    let mut prefix = 0.0;
    if m.is_covered() {
        let covered_mass = strategy.mass(0..covered);
        for (i, &p) in probs.iter().enumerate() {
            prefix += p;
            let value = if i < covered {
                gains[i] / covered_mass + (1.0 + 1.0 / covered_mass) * beta
            } else {
                gains[i] + beta / prefix
            };
            out.push(value);
        }
    } else {
        for (i, &p) in probs.iter().enumerate() {
            prefix += p;
            let value = if i >= arm {
                gains[i] + beta / prefix
            } else {
                pseudo[i] + (1.0 + 1.0 / p) * beta
            };
            out.push(value);
        }
    }
    Ok(out)
}
