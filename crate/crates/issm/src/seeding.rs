//! Named seed streams.
//!
//! Every random decision in a run draws from a stream derived from the run
//! seed and a short purpose label ("dataset", "split", "agent", …), so
//! changing how one component consumes randomness never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from a base seed and a stream label.
///
/// FNV-1a over the label mixed into the base via SplitMix64 finalizers;
/// stable across platforms and releases.
pub fn derive_seed(base: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(base ^ h)
}

/// A seeded RNG for the given stream. ChaCha8 keeps the stream portable.
pub fn stream_rng(base: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
