//! Brute-force references for cross-checking the production code.
//!
//! Everything here is written straight from the definitions: losses, set
//! sizes, the learner loop and the estimators are recomputed without calling
//! into `grid_loss`, `learners` or `harness` arithmetic. Only the estimator
//! enumeration deliberately drives the production estimators, since those
//! are what it evaluates.

use std::fmt;

use rand::Rng;

use crate::environments::{Environment, FixedStream, StepTruth};
use crate::error::{OcpError, Result};
use crate::grid_loss::{LossParams, MiscoverBit, ThresholdGrid};
use crate::harness::{run_observed, RunSpec, DEFAULT_DELTA};
use crate::learners::{
    estimator_bandit, estimator_exp3p, estimator_unlock, estimator_unlock_plus,
    unlock_reward_range, FeedbackRule, HyperParams, Strategy, Variant,
};
use crate::rng::{stream, LEARNER_STREAM};

pub const TINY_MAX_ARMS: usize = 5;
pub const TINY_MAX_ROUNDS: usize = 50;

/// The loss, written out independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLoss {
    pub alpha: f64,
    pub c: f64,
    pub scale: f64,
}

impl OracleLoss {
    pub fn loss(&self, pi: f64, covered: bool) -> f64 {
        let (a, c, s) = (self.alpha, self.c, self.scale);
        if covered {
            a + a * (1.0 - a) - c * a * (1.0 + pi * pi / (1.0 - a)) * s
        } else {
            1.0 - a * (1.0 - a) - c * a * s / (1.0 + a * (1.0 - 2.0 * a) * pi)
        }
    }

    pub fn loss_max(&self) -> f64 {
        self.loss(1.0, false)
    }

    pub fn loss_min(&self) -> f64 {
        let (a, c, s) = (self.alpha, self.c, self.scale);
        a + a * (1.0 - a) - (1.0 + 1.0 / (1.0 - a)) * c * a * s
    }

    pub fn gain(&self, pi: f64, covered: bool) -> f64 {
        let g = (self.loss_max() - self.loss(pi, covered)) / (self.loss_max() - self.loss_min());
        g.clamp(0.0, 1.0)
    }

    fn params(&self) -> Result<LossParams> {
        LossParams::new(self.alpha, self.c, self.scale)
    }
}

/// A small fully known game.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub grid: Vec<f64>,
    pub loss: OracleLoss,
    pub truths: Vec<StepTruth>,
    /// `losses[t][arm]`.
    pub losses: Vec<Vec<f64>>,
}

impl TinyInstance {
    pub fn new(grid: Vec<f64>, loss: OracleLoss, truths: Vec<StepTruth>) -> Result<Self> {
        let k = grid.len();
        if !(2..=TINY_MAX_ARMS).contains(&k) || truths.is_empty() || truths.len() > TINY_MAX_ROUNDS {
            return Err(OcpError::InvalidParam(format!(
                "tiny instances need 2..={TINY_MAX_ARMS} arms and 1..={TINY_MAX_ROUNDS} rounds"
            )));
        }
        for truth in &truths {
            truth.validate(k)?;
        }
        let losses = truths
            .iter()
            .map(|tr| grid.iter().map(|&pi| loss.loss(pi, tr.f_star >= pi)).collect())
            .collect();
        Ok(Self {
            grid,
            loss,
            truths,
            losses,
        })
    }

    /// Random instance on a uniform grid with a handful of labels.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let k = rng.random_range(2..=TINY_MAX_ARMS);
        let horizon = rng.random_range(1..=TINY_MAX_ROUNDS);
        let grid: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        let loss = OracleLoss {
            alpha: rng.random_range(0.05..0.45),
            c: rng.random_range(1.0..100.0),
            scale: 1.0 / (horizon as f64).sqrt(),
        };
        let labels = rng.random_range(1..=6);
        let truths = (1..=horizon)
            .map(|t| {
                // sometimes land exactly on a grid point to exercise the boundary
                let f_star = if rng.random_bool(0.2) {
                    grid[rng.random_range(0..k)]
                } else {
                    (rng.random::<f64>() * 1e9).round() / 1e9
                };
                let mut scores = vec![f_star];
                scores.extend((1..labels).map(|_| rng.random::<f64>()));
                let set_sizes = grid
                    .iter()
                    .map(|&pi| scores.iter().filter(|&&s| s >= pi).count() as u32)
                    .collect();
                StepTruth { t, f_star, set_sizes }
            })
            .collect();
        Self::new(grid, loss, truths).expect("random tiny instance is valid")
    }

    pub fn k(&self) -> usize {
        self.grid.len()
    }

    pub fn horizon(&self) -> usize {
        self.truths.len()
    }

    pub fn threshold_grid(&self) -> Result<ThresholdGrid> {
        ThresholdGrid::from_values(self.grid.clone())
    }

    pub fn loss_params(&self) -> Result<LossParams> {
        self.loss.params()
    }

    pub fn environment(&self) -> FixedStream {
        FixedStream::new(self.truths.clone())
    }

    /// Production run spec for this instance.
    pub fn run_spec(&self, variant: Variant, hyper: HyperParams, seed: u64) -> Result<RunSpec> {
        Ok(RunSpec {
            variant,
            grid: self.threshold_grid()?,
            params: self.loss_params()?,
            hyper,
            horizon: self.horizon(),
            seed,
            delta: DEFAULT_DELTA,
            feedback_rule: FeedbackRule::SemiBandit,
            initial_gains: None,
        })
    }
}

/// Column-sum minimizer over an explicit matrix; ties go to the smaller arm.
pub fn best_arm_in(losses: &[Vec<f64>]) -> (usize, f64) {
    let k = losses.first().map_or(0, Vec::len);
    let mut best = (0, f64::INFINITY);
    for arm in 0..k {
        let total: f64 = losses.iter().map(|row| row[arm]).sum();
        if total < best.1 {
            best = (arm, total);
        }
    }
    best
}

pub fn best_arm_bruteforce(instance: &TinyInstance) -> (usize, f64) {
    best_arm_in(&instance.losses)
}

/// One possible outcome of the draw `pi_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub arm: usize,
    pub prob: f64,
    pub m: MiscoverBit,
    pub estimate: Vec<f64>,
    /// `sum_pi p(pi) estimate(pi)`.
    pub weighted: f64,
}

/// Per-arm true gains under both outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub covered: Vec<f64>,
    pub missed: Vec<f64>,
}

impl GainTable {
    pub fn from_loss(loss: &OracleLoss, grid: &[f64]) -> Self {
        Self {
            covered: grid.iter().map(|&p| loss.gain(p, true)).collect(),
            missed: grid.iter().map(|&p| loss.gain(p, false)).collect(),
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            covered: vec![0.0; k],
            missed: vec![0.0; k],
        }
    }
}

/// Run the production estimator of `variant` for every possible played arm.
pub fn estimator_branches(
    variant: Variant,
    strategy: &Strategy,
    gains: &GainTable,
    f_star: f64,
    grid: &[f64],
    beta: f64,
) -> Result<Vec<Branch>> {
    let k = grid.len();
    let covered = grid.iter().filter(|&&p| p <= f_star).count();
    let realized: Vec<f64> = (0..k)
        .map(|i| if i < covered { gains.covered[i] } else { gains.missed[i] })
        .collect();
    let probs = strategy.probs();
    (0..k)
        .map(|arm| {
            let m = if arm < covered {
                MiscoverBit::COVERED
            } else {
                MiscoverBit::MISCOVERED
            };
            let visible_from = if m.is_covered() { 0 } else { arm };
            let visible: Vec<f64> = (0..k)
                .map(|i| if i >= visible_from { realized[i] } else { f64::NAN })
                .collect();
            let estimate = match variant {
                Variant::Exp3P => estimator_exp3p(arm, realized[arm], strategy, beta),
                Variant::Bandit => estimator_bandit(arm, realized[arm], strategy, beta),
                Variant::Unlock => estimator_unlock(
                    unlock_reward_range(arm, m, covered, k),
                    &visible,
                    strategy,
                    beta,
                )?,
                Variant::UnlockPlus => estimator_unlock_plus(
                    arm,
                    m,
                    covered,
                    &visible,
                    &gains.missed,
                    strategy,
                    beta,
                )?,
            };
            let weighted = probs.iter().zip(&estimate).map(|(p, e)| p * e).sum();
            Ok(Branch {
                arm,
                prob: probs[arm],
                m,
                estimate,
                weighted,
            })
        })
        .collect()
}

/// `E_{pi_t ~ p}[estimate]`, arm by arm, by enumerating every draw.
pub fn estimator_expectation_exact(
    variant: Variant,
    strategy: &Strategy,
    gains: &GainTable,
    f_star: f64,
    grid: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    let branches = estimator_branches(variant, strategy, gains, f_star, grid, beta)?;
    let mut expected = vec![0.0; grid.len()];
    for b in &branches {
        for (e, v) in expected.iter_mut().zip(&b.estimate) {
            *e += b.prob * v;
        }
    }
    Ok(expected)
}

/// Branchwise decomposition of the Unlock+ estimator expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlockPlusBranchCheck {
    pub arm: usize,
    pub m: MiscoverBit,
    pub c_t: f64,
    /// `sum p estimate` with all gains zeroed.
    pub beta_part: f64,
    /// `sum p estimate` with `beta = 0`.
    pub gain_part: f64,
    /// Gain of the played arm.
    pub played_gain: f64,
    /// Explicit nonnegative residual with `gain_part <= played_gain + residual`.
    pub residual: f64,
}

impl UnlockPlusBranchCheck {
    /// Bonus part within `C_t beta` and gain part within the residual.
    pub fn holds(&self, beta: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.c_t * beta);
        self.residual >= 0.0
            && self.beta_part <= self.c_t * beta + tol
            && self.gain_part <= self.played_gain + self.residual + 1e-12
    }
}

pub fn unlock_plus_branch_checks(
    strategy: &Strategy,
    gains: &GainTable,
    f_star: f64,
    grid: &[f64],
    beta: f64,
) -> Result<Vec<UnlockPlusBranchCheck>> {
    let k = grid.len();
    let covered = grid.iter().filter(|&&p| p <= f_star).count();
    let probs = strategy.probs();
    let inside: f64 = probs[..covered].iter().sum();
    let outside: f64 = probs[covered..].iter().sum();
    let bonus = estimator_branches(Variant::UnlockPlus, strategy, &GainTable::zeros(k), f_star, grid, beta)?;
    let plain = estimator_branches(Variant::UnlockPlus, strategy, gains, f_star, grid, 0.0)?;
    let max_of = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    Ok(bonus
        .iter()
        .zip(&plain)
        .map(|(b, g)| {
            let arm = b.arm;
            let ratio = if outside == 0.0 { 0.0 } else { outside / inside };
            let (locked, played_gain, residual) = if b.m.is_covered() {
                let best_inside = max_of(&gains.covered[..covered]);
                let best_outside = max_of(&gains.missed[covered..]);
                (1.0, gains.covered[arm], best_inside - gains.covered[arm] + best_outside)
            } else {
                (arm as f64, gains.missed[arm], max_of(&gains.missed) - gains.missed[arm])
            };
            UnlockPlusBranchCheck {
                arm,
                m: b.m,
                c_t: 1.0 + locked + ratio,
                beta_part: b.weighted,
                gain_part: g.weighted,
                played_gain,
                residual,
            }
        })
        .collect())
}

/// Trajectory and summary of the straight-line learner.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroTrace {
    pub arms: Vec<usize>,
    pub strategies: Vec<Vec<f64>>,
    pub mc: f64,
    pub ineff: f64,
    pub regret: f64,
    pub best_arm: usize,
    pub c_mc: f64,
}

/// The learner loop written out in one piece.
pub fn straight_line_run(
    instance: &TinyInstance,
    variant: Variant,
    hyper: &HyperParams,
    seed: u64,
) -> MicroTrace {
    let k = instance.k();
    let grid = &instance.grid;
    let loss = &instance.loss;
    let (eta, gamma, beta) = (hyper.eta, hyper.gamma, hyper.beta);
    let mut rng = stream(seed, LEARNER_STREAM);
    let mut cum = vec![0.0f64; k];
    let mut trace = MicroTrace {
        arms: Vec::new(),
        strategies: Vec::new(),
        mc: 0.0,
        ineff: 0.0,
        regret: 0.0,
        best_arm: 0,
        c_mc: 0.0,
    };
    let (mut misses, mut sizes, mut played_loss, mut a_sum) = (0usize, 0u64, 0.0, 0.0);

    for truth in &instance.truths {
        let top = cum.iter().map(|g| eta * g).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = cum.iter().map(|g| (eta * g - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|wi| (1.0 - gamma) * wi / z + gamma / k as f64).collect();

        let u: f64 = rng.random();
        let mut arm = k - 1;
        let mut acc = 0.0;
        for (i, &pi_mass) in p.iter().enumerate() {
            if pi_mass <= 0.0 {
                continue;
            }
            acc += pi_mass;
            if u <= acc {
                arm = i;
                break;
            }
        }

        let f = truth.f_star;
        let covers = |i: usize| f >= grid[i];
        let m_covered = covers(arm);
        let g = |i: usize| loss.gain(grid[i], covers(i));
        let est: Vec<f64> = match variant {
            Variant::Exp3P => (0..k)
                .map(|i| ((if i == arm { g(i) } else { 0.0 }) + beta) / p[i])
                .collect(),
            Variant::Bandit => (0..k)
                .map(|i| if i == arm { (g(i) + beta) / p[i] } else { beta / p[i] })
                .collect(),
            Variant::Unlock => {
                let in_set = |i: usize| if m_covered { covers(i) } else { i >= arm };
                let mass: f64 = (0..k).filter(|&i| in_set(i)).map(|i| p[i]).sum();
                (0..k)
                    .map(|i| if in_set(i) { g(i) / mass + beta / p[i] } else { beta / p[i] })
                    .collect()
            }
            Variant::UnlockPlus => {
                let star_mass: f64 = (0..k).filter(|&i| covers(i)).map(|i| p[i]).sum();
                (0..k)
                    .map(|i| {
                        let prefix: f64 = p[..=i].iter().sum();
                        if m_covered {
                            if covers(i) {
                                g(i) / star_mass + (1.0 + 1.0 / star_mass) * beta
                            } else {
                                g(i) + beta / prefix
                            }
                        } else if i >= arm {
                            g(i) + beta / prefix
                        } else {
                            loss.gain(grid[i], false) + (1.0 + 1.0 / p[i]) * beta
                        }
                    })
                    .collect()
            }
        };
        for (c, e) in cum.iter_mut().zip(&est) {
            *c += e;
        }

        let pi = grid[arm];
        played_loss += loss.loss(pi, m_covered);
        a_sum += loss.loss(pi, m_covered) - if m_covered {
            loss.alpha + loss.alpha * (1.0 - loss.alpha)
        } else {
            1.0 - loss.alpha * (1.0 - loss.alpha)
        };
        misses += (!m_covered) as usize;
        sizes += truth.set_sizes[arm] as u64;
        trace.arms.push(arm);
        trace.strategies.push(p);
    }

    let t = instance.horizon() as f64;
    let alpha = loss.alpha;
    let (best_arm, best_loss) = best_arm_bruteforce(instance);
    let n1 = misses as f64;
    let n0 = t - n1;
    let a_zero = -loss.c * alpha * loss.scale;
    trace.mc = n1 / t;
    trace.ineff = sizes as f64 / t;
    trace.regret = played_loss - best_loss;
    trace.best_arm = best_arm;
    let gap_term = if misses == 0 {
        0.0
    } else {
        alpha * (n1 / t) * ((1.0 - alpha) / alpha - n0 / n1)
    };
    trace.c_mc = (t * a_zero - a_sum) / t + gap_term;
    trace
}

/// First disagreement between the production harness and the straight-line run.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: Option<usize>,
    pub what: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(t) => write!(f, "diverged at step {t}: {}", self.what),
            None => write!(f, "summaries differ: {}", self.what),
        }
    }
}

const CROSSCHECK_TOLERANCE: f64 = 1e-12;

/// Run the instance through the harness (fed by its in-memory stream) and
/// through [`straight_line_run`]; arms must agree exactly, strategies and
/// summaries to 1e-12.
pub fn micro_replay_crosscheck(
    instance: &TinyInstance,
    variant: Variant,
    hyper: HyperParams,
    seed: u64,
) -> std::result::Result<(), Divergence> {
    let mut env = instance.environment();
    micro_crosscheck_env(instance, &mut env, variant, hyper, seed)
}

/// [`micro_replay_crosscheck`] with the harness reading from `env`, which
/// must yield the instance's truths.
pub fn micro_crosscheck_env(
    instance: &TinyInstance,
    env: &mut dyn Environment,
    variant: Variant,
    hyper: HyperParams,
    seed: u64,
) -> std::result::Result<(), Divergence> {
    let setup = |e: OcpError| Divergence {
        step: None,
        what: format!("harness error: {e}"),
    };
    let spec = instance.run_spec(variant, hyper, seed).map_err(setup)?;
    let mut strategies = Vec::with_capacity(instance.horizon());
    let log = run_observed(env, &spec, |view| strategies.push(view.strategy.probs().to_vec()))
        .map_err(setup)?;
    let reference = straight_line_run(instance, variant, &hyper, seed);

    for (i, r) in log.records.iter().enumerate() {
        let t = i + 1;
        if r.arm != reference.arms[i] {
            return Err(Divergence {
                step: Some(t),
                what: format!("arm {} vs {}", r.arm, reference.arms[i]),
            });
        }
        let worst = strategies[i]
            .iter()
            .zip(&reference.strategies[i])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if worst > CROSSCHECK_TOLERANCE {
            return Err(Divergence {
                step: Some(t),
                what: format!("strategy differs by {worst:e}"),
            });
        }
    }
    let s = &log.summary;
    let pairs = [
        ("mc", s.mc, reference.mc),
        ("ineff", s.ineff, reference.ineff),
        ("regret", s.regret, reference.regret),
        ("c_mc", s.c_mc, reference.c_mc),
    ];
    for (name, a, b) in pairs {
        if (a - b).abs() > CROSSCHECK_TOLERANCE {
            return Err(Divergence {
                step: None,
                what: format!("{name}: {a} vs {b}"),
            });
        }
    }
    if s.best_arm != reference.best_arm {
        return Err(Divergence {
            step: None,
            what: format!("best arm {} vs {}", s.best_arm, reference.best_arm),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_matrices() {
        assert_eq!(best_arm_in(&[vec![0.2, 0.3], vec![0.4, 0.1]]).0, 1);
        assert!((best_arm_in(&[vec![0.2, 0.3], vec![0.4, 0.1]]).1 - 0.4).abs() < 1e-15);
        assert_eq!(best_arm_in(&[vec![0.5; 4], vec![0.5; 4]]).0, 0);
        let (arm, total) = best_arm_in(&[vec![0.7], vec![0.1]]);
        assert_eq!(arm, 0);
        assert!((total - 0.8).abs() < 1e-15);
    }

    #[test]
    fn oracle_loss_matches_production_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let inst = TinyInstance::random(&mut rng);
            let params = inst.loss_params().unwrap();
            for &pi in &inst.grid {
                for covered in [true, false] {
                    let m = if covered { MiscoverBit::COVERED } else { MiscoverBit::MISCOVERED };
                    assert!((inst.loss.loss(pi, covered) - params.loss(pi, m)).abs() < 1e-15);
                    assert!((inst.loss.gain(pi, covered) - params.gain(pi, m)).abs() < 1e-12);
                }
            }
            assert!((inst.loss.loss_min() - params.loss_min()).abs() < 1e-14);
        }
    }

    #[test]
    fn bandit_branch_values_on_uniform_example() {
        let s = Strategy::from_probs(vec![0.25; 4]).unwrap();
        let grid = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let gains = GainTable {
            covered: vec![0.5; 4],
            missed: vec![0.5; 4],
        };
        for b in estimator_branches(Variant::Bandit, &s, &gains, 0.5, &grid, 0.1).unwrap() {
            assert!((b.weighted - 0.9).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn straight_line_agrees_on_small_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = loop {
            let i = TinyInstance::random(&mut rng);
            if i.k() == 3 && i.horizon() >= 10 {
                break i;
            }
        };
        let hyper = HyperParams::theorem_schedule(3, inst.horizon()).unwrap();
        for variant in Variant::ALL {
            micro_replay_crosscheck(&inst, variant, hyper, 4).unwrap();
        }
    }
}
