//! Counter-style seed derivation. A stream is identified by
//! `(master, lane, counter)` so parallel workers draw reproducible,
//! order-independent samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with two counters into a new 64-bit seed.
pub fn derive_seed(master: u64, lane: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ lane) ^ counter.rotate_left(32))
}

pub fn stream(master: u64, lane: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, lane, counter))
}
