//! Deterministic seed derivation.
//!
//! Every stochastic component in this crate takes an explicit seed. Sub-seeds
//! for independent streams (splits, predictor init, per-iteration mutation,
//! per-run sweep cells) are derived from a base seed plus a list of tags via
//! a fixed 64-bit mixer, so results never depend on hasher state or on the
//! order in which parallel jobs complete.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based RNG used everywhere in the crate. ChaCha8 is stable across
/// platforms and rust releases, which the byte-identical-output contract
/// relies on.
pub type Rng = ChaCha8Rng;

/// Build the crate-wide RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with an ordered list of 64-bit tags.
///
/// The mixing is position-sensitive: `derive_seed(s, &[a, b])` and
/// `derive_seed(s, &[b, a])` differ.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag));
    }
    state
}

/// Tag for a string component (loss names, stream labels).
pub fn tag_str(s: &str) -> u64 {
    // FNV-1a, stable by construction.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in s.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Tag for a float component (sweep portions).
pub fn tag_f64(x: f64) -> u64 {
    x.to_bits()
}

/// Map `(seed, tags)` to a unit-interval sample without constructing an RNG.
/// Used by the synthetic landscape, where every value must be recomputable
/// from the architecture contents alone.
pub fn unit_from_tags(base: u64, tags: &[u64]) -> f64 {
    let bits = derive_seed(base, tags);
    // 53 high bits -> [0, 1)
    (bits >> 11) as f64 / (1u64 << 53) as f64
}
