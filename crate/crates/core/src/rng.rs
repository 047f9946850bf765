//! Seeded generator streams.
//!
//! Every stochastic routine takes a `u64` seed and expands it into its own
//! ChaCha8 stream, so results are reproducible across platforms. Replicate
//! `i` of a batch run with master seed `s` uses seed `s ^ i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
    master ^ replicate
}

/// A second, independent ChaCha stream for the same seed, for draws that
/// must not shift the main stream (e.g. per-replicate initial conditions).
pub fn side_stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(stream.max(1));
    rng
}
