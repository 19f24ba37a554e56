//! Seed derivation shared by every stochastic component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes `root` and `stream` into an independent 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded(root: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream))
}

// stream tags keep the consumers of one root seed apart
pub(crate) const STREAM_CV_SHUFFLE: u64 = 1;
pub(crate) const STREAM_CV_FOLD: u64 = 2;
pub(crate) const STREAM_FOREST: u64 = 3;
pub(crate) const STREAM_SHAPLEY: u64 = 4;
pub(crate) const STREAM_LHS: u64 = 5;
pub(crate) const STREAM_CANDIDATES: u64 = 6;
