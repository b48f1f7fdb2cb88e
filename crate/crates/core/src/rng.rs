//! Counter-based random substreams.
//!
//! Every Monte Carlo trial owns a ChaCha stream keyed by a 64-bit value mixed
//! from the base seed and the trial's identity, so results do not depend on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one key.
pub fn derive_key(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// A generator for `key` positioned on substream `stream`.
pub fn substream(key: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}
