//! Reproducible per-item random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the user
//! seed, a domain tag and an item index, so results do not depend on the
//! order or the thread in which items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating independent uses of one seed.
pub mod domain {
    pub const FLOW: u64 = 0x464c_4f57;
    pub const THINNING: u64 = 0x5448_494e;
    pub const MONTE_CARLO: u64 = 0x4d43_4d43;
    pub const OPTIMIZER: u64 = 0x4f50_5449;
    pub const REPLICATE: u64 = 0x5245_504c;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed and a tag into a new 64-bit seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// The stream for item `index` of `domain` under `seed`.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(index);
    rng
}
