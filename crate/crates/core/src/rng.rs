//! Seeded random stream used for parameters and synthetic scenes.
//!
//! The stream is the reference splitmix64 generator (state increment
//! `0x9e3779b97f4a7c15`, finalizer multipliers `0xbf58476d1ce4e5b9` and
//! `0x94d049bb133111eb`, shifts 30/27/31), seeded directly with the 64-bit
//! seed as its initial state. Derived quantities:
//!
//! * `uniform`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `index(n)`: `(next_u64 as u128 * n) >> 64`.
//! * `normal`: Box–Muller on two consecutive uniforms `u1, u2`, with
//!   `r = sqrt(-2 ln(1 - u1))`; the cosine branch `r·cos(2π·u2)` is returned
//!   first and the sine branch `r·sin(2π·u2)` is returned by the next call.
//! * `unit_vector`: three normals, normalized; redrawn if the norm is below 1e-12.

use nalgebra::Vector3;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub struct SeededStream {
    inner: SplitMix64,
    spare_normal: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// An independent stream for a named sub-purpose: seed `seed ^ (salt · 0x9e3779b97f4a7c15)`.
    pub fn derive(seed: u64, salt: u64) -> Self {
        Self::new(seed ^ salt.wrapping_mul(GOLDEN))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    pub fn unit_vector(&mut self) -> Vector3<f64> {
        loop {
            let v = Vector3::new(self.normal(), self.normal(), self.normal());
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }
}
