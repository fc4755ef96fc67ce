//! Counter-based seed derivation.
//!
//! Every stochastic choice is keyed by `(base_seed, purpose, index)` so that
//! adding a new consumer never shifts the stream of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a of the purpose tag, so tags are stable across builds.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3))
}

pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ tag_hash(tag)) ^ index)
}

pub fn rng(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tag, index))
}
