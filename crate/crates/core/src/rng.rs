//! Seeded random streams. Every random draw in the simulator goes through here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed for a named purpose (splitmix64 finalizer).
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed
        .wrapping_add(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub mod purpose {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const CLOUD_INIT: u64 = 3;
    pub const CLOUD_SHUFFLE: u64 = 4;
    pub const EDGE_INIT: u64 = 5;
    pub const EDGE_SHUFFLE: u64 = 6;
    pub const HEAD_INIT: u64 = 7;
    pub const EXPAND: u64 = 8;
    pub const STREAM: u64 = 9;
    pub const UPDATE_SHUFFLE: u64 = 10;
}
