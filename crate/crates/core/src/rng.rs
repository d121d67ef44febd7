//! Seeded random streams.
//!
//! A run seed fans out into independent ChaCha8 streams, one per consumer,
//! so the environment's draws do not depend on how many numbers the learner
//! consumed (and vice versa). This is what lets a replayed stream reproduce a
//! live run exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for arm sampling.
pub const LEARNER_STREAM: u64 = 0;
/// Stream used by synthetic environments.
pub const ENV_STREAM: u64 = 1;

pub type RunRng = ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed of the `index`-th run of a suite starting at `base`.
pub fn suite_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}
