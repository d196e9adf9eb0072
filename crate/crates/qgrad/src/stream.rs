//! Seed and stream bookkeeping.
//!
//! Every random decision in the toolkit draws from a ChaCha stream
//! derived from one master seed plus a structured stream id, so runs
//! are reproducible and adding restarts or runs never perturbs the
//! draws of earlier ones. The id space is partitioned by purpose:
//!
//! * stream 0 — model weight initialization,
//! * stream 1 — epoch shuffling during training,
//! * bit 62 set — evaluation attacks: `(run << 32) | restart`,
//! * bit 63 set — inner attacks during adversarial training:
//!   `(epoch << 32) | (batch << 16) | restart`.
//!
//! Restart indices occupy the low bits, so an attack entry point takes
//! a base id with those bits clear and ors the restart in.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id for model weight initialization.
pub const INIT_STREAM: u64 = 0;
/// Stream id for minibatch shuffling.
pub const SHUFFLE_STREAM: u64 = 1;

/// Deterministic generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Base stream id for evaluation run `run`; restart indices are or-ed
/// into the low 32 bits by the attack loop.
pub fn eval_run_stream(run: usize) -> u64 {
    (1 << 62) | ((run as u64) << 32)
}

/// Base stream id for the inner attack of training minibatch
/// `(epoch, batch)`; restarts occupy the low 16 bits.
pub fn train_attack_stream(epoch: usize, batch: usize) -> u64 {
    (1 << 63) | ((epoch as u64) << 32) | ((batch as u64) << 16)
}
