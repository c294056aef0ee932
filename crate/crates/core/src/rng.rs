//! Deterministic seed fan-out.
//!
//! One experiment seed feeds every random decision. Each consumer asks for a
//! substream keyed by a purpose tag plus indices (task, epoch, layer...), so
//! adding a consumer never shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for [`derive_seed`].
pub mod stream {
    pub const PROJECTION: u64 = 1;
    pub const PRE_INIT: u64 = 2;
    pub const HEAD_INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const DATA: u64 = 5;
    pub const PROBE: u64 = 6;
    pub const CBP: u64 = 7;
    pub const CLASS_ORDER: u64 = 8;
    pub const PERMUTATION: u64 = 9;
    pub const IMBALANCE: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with each tag in turn.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn substream(base: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, tags))
}
