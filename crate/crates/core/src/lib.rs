//! Online conformal prediction as a K-armed adversarial bandit over a grid
//! of score thresholds.
//!
//! * [`grid_loss`]: thresholds, miscoverage bits and the coverage/size loss.
//! * [`learners`]: exponential-weights learners and their gain estimators.
//! * [`environments`]: per-round ground truth (synthetic, adaptive, replayed).
//! * [`harness`]: the feedback loop plus regret, coverage and bound metrics.
//! * [`oracle`]: brute-force references used by the tests.

pub mod environments;
pub mod error;
pub mod grid_loss;
pub mod harness;
pub mod learners;
pub mod oracle;
pub mod rng;

pub use environments::{EnvSpec, Environment, StepTruth};
pub use error::{OcpError, Result};
pub use grid_loss::{LossParams, MiscoverBit, ThresholdGrid};
pub use harness::{run, run_observed, RunLog, RunSpec, RunSummary, StepRecord};
pub use learners::{Feedback, FeedbackRule, HyperParams, Learner, Strategy, Variant};
