//! Deterministic randomness: one root seed, labeled derived streams.
//!
//! Every stochastic phase (init, batch draws, corruption noise, probes)
//! derives its own stream from the run seed and a string label, so adding a
//! consumer never shifts the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over arbitrary bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives a child seed from (root seed, stream label, index).
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(
        seed ^ fnv1a(label.as_bytes()).rotate_left(17) ^ index.wrapping_mul(0x9E3779B97F4A7C15),
    )
}

/// Seeded generator for a labeled stream.
pub fn stream_rng(seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(seed, label, index))
}
