//! Seeded random streams.
//!
//! All randomness in the pipeline flows from one experiment seed. Sub-streams
//! (per scene, per window, per purpose) are derived by hashing the parent seed
//! with a tag so that changing one stage never perturbs another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

pub type SeededRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an ordered list of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

pub fn rng_from(seed: u64, tags: &[u64]) -> SeededRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Standard normal sample (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u1 in (0, 1] keeps the log finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * math::sin_cos(core::f64::consts::TAU * u2).1
}

/// Unit-mean exponential sample.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -math::ln(1.0 - rng.gen::<f64>())
}
