//! Seeded, platform-independent random source.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), a
//! counter-based stream cipher whose output is fixed by its 256-bit key,
//! 64-bit stream id and 64-bit block counter. A `u64` seed is expanded to
//! the key with `rand_core`'s documented PCG32 expansion
//! (`SeedableRng::seed_from_u64`). Replica `r` of an experiment with base
//! seed `s` uses the key derived from `s` and stream id `r`, so replicas
//! never share keystream and replica 0 equals a plain `seed_from(s)`.
//!
//! Uniforms take the top 53 bits of a `u64`; normals use the cosine branch
//! of Box-Muller evaluated with `libm`, so draws are bit-identical across
//! platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn seed_from(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent generator for replica `replica` of base seed `base`.
    pub fn for_replica(base: u64, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(replica);
        SimRng(rng)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` by rejection, `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below((hi - lo + 1) as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// Index drawn from the (normalised) weights. Falls back to the last
    /// positive weight if rounding leaves the draw past the cumulative sum.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let u = self.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                return i;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}
