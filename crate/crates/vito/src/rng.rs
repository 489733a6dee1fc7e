//! Reproducible random streams.
//!
//! Every stochastic consumer derives its stream from a `(master seed,
//! stream index)` pair, so sample generation stays bit-identical no matter
//! how work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Independent stream `index` under `master_seed`.
pub fn derived_stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
