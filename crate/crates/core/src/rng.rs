//! Portable sampling on top of a 64-bit generator. Only the raw `u64` stream
//! is consumed, so any SplitMix64 implementation reproduces the same draws.

use std::f64::consts::TAU;

use rand_core::RngCore;

/// Uniform `f64` in `[0, 1)` from the top 53 bits of a `u64`.
#[inline]
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform `f64` in `[lo, hi)`.
#[inline]
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

/// Standard normal via Box–Muller, consuming exactly two draws.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - unit_f64(rng); // (0, 1]
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
