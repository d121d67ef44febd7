use serde::{Deserialize, Serialize};

use super::StepRecord;
use crate::error::{OcpError, Result};
use crate::grid_loss::{LossParams, MiscoverBit, ThresholdGrid};

/// Fraction of rounds whose played set missed the true label.
pub fn miscoverage_rate(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(OcpError::EmptyLog);
    }
    let misses: u64 = records.iter().map(|r| r.m.as_u8() as u64).sum();
    Ok(misses as f64 / records.len() as f64)
}

/// Average size of the played sets.
pub fn inefficiency(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(OcpError::EmptyLog);
    }
    let total: u64 = records.iter().map(|r| r.set_size as u64).sum();
    Ok(total as f64 / records.len() as f64)
}

/// Learner loss against the best fixed arm in hindsight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regret {
    pub value: f64,
    pub best_arm: usize,
    pub best_loss: f64,
    pub learner_loss: f64,
}

/// Index and value of the smallest entry; ties go to the lower index.
pub fn argmin_lowest(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Regret of `plays` over an explicit loss matrix (`rows[t][arm]`).
pub fn regret_from_matrix(plays: &[usize], rows: &[Vec<f64>]) -> Result<Regret> {
    if rows.is_empty() {
        return Err(OcpError::EmptyLog);
    }
    if plays.len() != rows.len() {
        return Err(OcpError::InvalidParam(format!(
            "{} plays for {} loss rows",
            plays.len(),
            rows.len()
        )));
    }
    let k = rows[0].len();
    let mut columns = vec![0.0; k];
    let mut learner_loss = 0.0;
    for (&arm, row) in plays.iter().zip(rows) {
        if row.len() != k || arm >= k {
            return Err(OcpError::InvalidParam("ragged loss matrix".into()));
        }
        learner_loss += row[arm];
        for (c, l) in columns.iter_mut().zip(row) {
            *c += l;
        }
    }
    finish_regret(learner_loss, &columns)
}

fn finish_regret(learner_loss: f64, columns: &[f64]) -> Result<Regret> {
    let (best_arm, best_loss) =
        argmin_lowest(columns).ok_or_else(|| OcpError::InvalidParam("no arms".into()))?;
    let value = learner_loss - best_loss;
    if !value.is_finite() {
        return Err(OcpError::NonFinite("regret"));
    }
    Ok(Regret {
        value,
        best_arm,
        best_loss,
        learner_loss,
    })
}

/// Per-arm cumulative loss, rebuilt from each record's true score.
pub fn column_losses(records: &[StepRecord], grid: &ThresholdGrid, params: &LossParams) -> Vec<f64> {
    let k = grid.len();
    let covered_loss: Vec<f64> = grid
        .values()
        .iter()
        .map(|&p| params.loss(p, MiscoverBit::COVERED))
        .collect();
    let missed_loss: Vec<f64> = grid
        .values()
        .iter()
        .map(|&p| params.loss(p, MiscoverBit::MISCOVERED))
        .collect();
    let mut columns = vec![0.0; k];
    for r in records {
        let covered = grid.covered_count(r.f_star);
        for i in 0..k {
            columns[i] += if i < covered { covered_loss[i] } else { missed_loss[i] };
        }
    }
    columns
}

/// Regret of a logged run using the evaluator's full loss rows.
pub fn regret(records: &[StepRecord], grid: &ThresholdGrid, params: &LossParams) -> Result<Regret> {
    if records.is_empty() {
        return Err(OcpError::EmptyLog);
    }
    let learner_loss: f64 = records.iter().map(|r| r.loss).sum();
    finish_regret(learner_loss, &column_losses(records, grid, params))
}

/// Offset terms turning a regret bound into a coverage bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageOffset {
    /// `(T a(0, 0) - sum_t a(pi_t, m_t)) / T`.
    pub c1: f64,
    /// `(1 - alpha) / alpha - N0 / N1`; absent when no round miscovered.
    pub c_gap_scaled: Option<f64>,
    /// `c1 + (N1 (1 - alpha) - alpha N0) / T`, or just `c1` when `N1 = 0`.
    pub c_mc: f64,
    pub n0: u64,
    pub n1: u64,
}

/// Coverage offset from the played `(pi, m)` pairs.
pub fn c_mc(records: &[StepRecord], params: &LossParams) -> Result<CoverageOffset> {
    c_mc_from_plays(records.iter().map(|r| (r.pi, r.m)), params)
}

/// Same as [`c_mc`] over bare `(pi, m)` pairs.
pub fn c_mc_from_plays<I>(plays: I, params: &LossParams) -> Result<CoverageOffset>
where
    I: IntoIterator<Item = (f64, MiscoverBit)>,
{
    let alpha = params.alpha();
    let a_zero = params.a_term(0.0, MiscoverBit::COVERED);
    let mut shortfall = 0.0;
    let (mut n0, mut n1) = (0u64, 0u64);
    for (pi, m) in plays {
        shortfall += a_zero - params.a_term(pi, m);
        if m.is_miscovered() {
            n1 += 1;
        } else {
            n0 += 1;
        }
    }
    let t = n0 + n1;
    if t == 0 {
        return Err(OcpError::EmptyLog);
    }
    let tf = t as f64;
    let c1 = shortfall / tf;
    let c_gap_scaled = (n1 > 0).then(|| (1.0 - alpha) / alpha - n0 as f64 / n1 as f64);
    let c_mc = if n1 == 0 {
        c1
    } else {
        c1 + (n1 as f64 * (1.0 - alpha) - alpha * n0 as f64) / tf
    };
    Ok(CoverageOffset {
        c1,
        c_gap_scaled,
        c_mc,
        n0,
        n1,
    })
}

/// Outcome of the pathwise regret-to-coverage inequality
/// `MC - alpha <= Reg / T + C_mc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub pass: bool,
    /// `rhs - lhs`; nonnegative up to the tolerance when the check passes.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub seed: u64,
}

/// Tolerance on the pathwise inequality.
pub const LEMMA1_TOLERANCE: f64 = 1e-9;

pub fn lemma1_check(
    mc: f64,
    alpha: f64,
    regret: f64,
    horizon: usize,
    c_mc: f64,
    seed: u64,
) -> Lemma1Report {
    let lhs = mc - alpha;
    let rhs = regret / horizon as f64 + c_mc;
    let slack = rhs - lhs;
    Lemma1Report {
        pass: slack >= -LEMMA1_TOLERANCE,
        slack,
        lhs,
        rhs,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, pi: f64, m: u8, set_size: u32) -> StepRecord {
        StepRecord {
            t,
            arm: 0,
            pi,
            m: MiscoverBit::from_u8(m).unwrap(),
            loss: 0.0,
            set_size,
            f_star: 0.0,
            score_revealed: m == 0,
            c_t: 2.0,
        }
    }

    #[test]
    fn rates_on_small_logs() {
        let all_cov: Vec<_> = (1..=4).map(|t| rec(t, 0.0, 0, 7)).collect();
        assert_eq!(miscoverage_rate(&all_cov).unwrap(), 0.0);
        assert_eq!(inefficiency(&all_cov).unwrap(), 7.0);
        let mixed: Vec<_> = [1u8, 0, 1, 0]
            .iter()
            .enumerate()
            .map(|(i, &m)| rec(i + 1, 0.5, m, 0))
            .collect();
        assert_eq!(miscoverage_rate(&mixed).unwrap(), 0.5);
        let sizes = [rec(1, 0.0, 0, 10), rec(2, 0.0, 0, 0)];
        assert_eq!(inefficiency(&sizes).unwrap(), 5.0);
        assert_eq!(miscoverage_rate(&[]), Err(OcpError::EmptyLog));
        assert_eq!(inefficiency(&[]), Err(OcpError::EmptyLog));
    }

    #[test]
    fn two_by_two_regret() {
        let rows = vec![vec![0.2, 0.3], vec![0.4, 0.1]];
        let r = regret_from_matrix(&[0, 0], &rows).unwrap();
        assert!((r.value - 0.2).abs() < 1e-15);
        assert_eq!(r.best_arm, 1);
        let zero = regret_from_matrix(&[1, 1], &rows).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn regret_ignores_per_round_constants() {
        let rows = vec![vec![0.2, 0.3, 0.25], vec![0.4, 0.1, 0.3], vec![0.5, 0.6, 0.2]];
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .zip([0.125, -0.0625, 0.25])
            .map(|(r, s)| r.iter().map(|l| l + s).collect())
            .collect();
        let plays = [2, 0, 1];
        let a = regret_from_matrix(&plays, &rows).unwrap();
        let b = regret_from_matrix(&plays, &shifted).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert_eq!(a.best_arm, b.best_arm);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmin_lowest(&[1.0, 1.0, 1.0]), Some((0, 1.0)));
        assert_eq!(argmin_lowest(&[2.0, 1.0, 1.0]), Some((1, 1.0)));
        assert_eq!(argmin_lowest(&[]), None);
    }

    #[test]
    fn offset_vanishes_when_always_playing_zero() {
        let params = LossParams::new(0.1, 40.0, 0.01).unwrap();
        let log: Vec<_> = (1..=10).map(|t| rec(t, 0.0, 0, 5)).collect();
        let off = c_mc(&log, &params).unwrap();
        assert_eq!(off.c_mc, 0.0);
        assert_eq!(off.c_gap_scaled, None);
        let report = lemma1_check(0.0, 0.1, 0.0, 10, off.c_mc, 3);
        assert!(report.pass);
        assert!((report.lhs + 0.1).abs() < 1e-15);
    }

    #[test]
    fn balanced_counts_cancel() {
        // at pi = 0 both a-terms agree, and N0 / N1 = 9 = (1 - alpha) / alpha
        let params = LossParams::new(0.1, 40.0, 0.01).unwrap();
        let plays = (0..10).map(|i| (0.0, MiscoverBit::from_u8((i == 0) as u8).unwrap()));
        let off = c_mc_from_plays(plays, &params).unwrap();
        assert!(off.c_mc.abs() < 1e-15, "{}", off.c_mc);
        assert!(off.c_gap_scaled.unwrap().abs() < 1e-12);
    }

    #[test]
    fn failing_check_reports_seed() {
        let r = lemma1_check(0.5, 0.1, 0.0, 100, 0.0, 42);
        assert!(!r.pass);
        assert_eq!(r.seed, 42);
        assert!((r.slack + 0.4).abs() < 1e-15);
    }
}
