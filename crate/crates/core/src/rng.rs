//! Seedable pseudo-random number generator shared by every stochastic step.
//!
//! # Algorithm
//!
//! The core generator is xoshiro256** (Blackman & Vigna). Its 256-bit state is
//! filled from a 64-bit seed by four consecutive SplitMix64 outputs:
//!
//! ```text
//! splitmix64(s):  s += 0x9E3779B97F4A7C15
//!                 z = s
//!                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!                 return z ^ (z >> 31)
//! ```
//!
//! Derived quantities are defined on top of `next_u64` only:
//!
//! * `uniform()` = `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)` = Lemire's multiply-shift with rejection on the low word.
//! * `normal()` = Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2π u2)`; one value
//!   per two uniforms, nothing cached.
//! * `shuffle` = Fisher-Yates from the last index down, `j = below(i + 1)`.
//!
//! Independent streams (folds, grid points) use [`Rng::stream`], which seeds
//! a fresh generator from `splitmix64(seed ^ splitmix64(stream_id))`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// SplitMix64 step on a value, used for seed derivation.
pub fn splitmix64(mut state: u64) -> u64 {
    state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Generator for an independent stream derived from `(seed, stream_id)`.
    pub fn stream(seed: u64, stream_id: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(stream_id)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Log-uniform draw in `[lo, hi]`, both positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
