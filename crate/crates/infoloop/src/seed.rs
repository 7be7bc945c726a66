//! Deterministic seed derivation. Every random stream in the tool descends
//! from one master seed via the splitmix64 finalizer:
//!
//!   sub_seed(master, index) = mix64(master ^ mix64(index + 1))
//!
//! The mixing is pure 64-bit integer arithmetic and identical on every
//! platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives the sub-stream seed for a run index under a master seed.
pub fn derive(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(1)))
}

/// Counter-based RNG for a derived seed.
pub fn rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, index))
}
