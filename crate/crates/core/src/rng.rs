//! Seed plumbing.
//!
//! Every random object is drawn from a [`ChaCha8Rng`] stream. Streams for
//! independent objects are keyed by mixing a master seed with a purpose tag
//! and up to two indices through SplitMix64, so any single trial can be
//! regenerated without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The pinned generator used for all draws.
pub type TrialRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, purpose, i, j)`.
pub fn derive_seed(master: u64, purpose: &str, i: u64, j: u64) -> u64 {
    // FNV-1a over the tag keeps purposes apart without pulling in a hasher.
    let mut tag = 0xcbf2_9ce4_8422_2325u64;
    for byte in purpose.bytes() {
        tag ^= u64::from(byte);
        tag = tag.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut h = splitmix64(master);
    h = splitmix64(h ^ tag);
    h = splitmix64(h ^ i);
    splitmix64(h ^ j.rotate_left(32))
}
