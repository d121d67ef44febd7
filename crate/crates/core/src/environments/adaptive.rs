use std::collections::VecDeque;

use rand::Rng;

use super::{count_set_sizes, quantize_score, AdaptiveParams, Environment, StepTruth};
use crate::error::Result;
use crate::grid_loss::{MiscoverBit, ThresholdGrid};
use crate::rng::RunRng;

/// Threshold-tracking adversary.
///
/// Looks at the learner's last `window` plays, takes the most frequent arm
/// `pi_hat` (lowest index on ties) and sets the true score a `margin`
/// fraction of the way down to the next lower grid point, so that arm and
/// everything above it miscover. With `pi_hat = 0` the score is 0.
/// Decoy labels are uniform. With no history yet it behaves like the
/// uniform i.i.d. environment.
#[derive(Debug)]
pub struct AdaptiveEnv {
    params: AdaptiveParams,
    grid: ThresholdGrid,
    rng: RunRng,
    recent: VecDeque<usize>,
    counts: Vec<usize>,
    scores: Vec<f64>,
}

impl AdaptiveEnv {
    pub fn new(params: AdaptiveParams, grid: ThresholdGrid, rng: RunRng) -> Result<Self> {
        Ok(Self {
            counts: vec![0; grid.len()],
            recent: VecDeque::with_capacity(params.window),
            scores: Vec::with_capacity(params.labels),
            params,
            grid,
            rng,
        })
    }

    /// Most played arm over the window, if any play was seen.
    pub fn tracked_arm(&self) -> Option<usize> {
        if self.recent.is_empty() {
            return None;
        }
        let mut best = 0;
        for (arm, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = arm;
            }
        }
        Some(best)
    }
}

impl Environment for AdaptiveEnv {
    fn next_truth(&mut self, t: usize) -> Result<Option<StepTruth>> {
        self.scores.clear();
        let f_star = match self.tracked_arm() {
            Some(0) => 0.0,
            Some(arm) => {
                let hi = self.grid.value(arm);
                let lo = self.grid.value(arm - 1);
                quantize_score(hi - self.params.margin * (hi - lo))
            }
            None => quantize_score(self.rng.random::<f64>()),
        };
        self.scores.push(f_star);
        for _ in 1..self.params.labels {
            self.scores.push(self.rng.random::<f64>());
        }
        Ok(Some(StepTruth {
            t,
            f_star,
            set_sizes: count_set_sizes(&self.scores, &self.grid),
        }))
    }

    fn observe_play(&mut self, arm: usize, _pi: f64, _m: MiscoverBit) {
        if self.recent.len() == self.params.window {
            if let Some(old) = self.recent.pop_front() {
                self.counts[old] -= 1;
            }
        }
        self.recent.push_back(arm);
        self.counts[arm] += 1;
    }
}
