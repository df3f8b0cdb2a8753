//! Per-object deterministic random streams.
//!
//! Each object owns one xoshiro256++ generator whose 256-bit state is filled
//! by SplitMix64 from `mix(global_seed, object_index)`. Streams never share
//! state, so the draws an object observes depend only on its own history,
//! never on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp, Exp1, LogNormal, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::CoreError;
use crate::time::VirtualTime;

/// SplitMix64 finalizer; also used by the fingerprint code.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for object `index` under `global_seed`.
pub fn stream_seed(global_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(global_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(global_seed: u64, index: u64) -> Self {
        RngStream { inner: Xoshiro256PlusPlus::seed_from_u64(stream_seed(global_seed, index)) }
    }

    /// Sample of `Exp(1/mean)`, i.e. an exponential with the given mean.
    pub fn exponential(&mut self, mean: f64) -> Result<VirtualTime, CoreError> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(CoreError::InvalidParameter(format!("exponential mean must be positive, got {mean}")));
        }
        let dist = Exp::new(1.0 / mean).map_err(|e| CoreError::InvalidParameter(e.to_string()))?;
        Ok(VirtualTime::from_f64_unchecked(dist.sample(&mut self.inner)))
    }

    /// Exponential draw with a mean known to be valid; returns a plain float.
    #[inline]
    pub fn exp_f64(&mut self, mean: f64) -> f64 {
        let x: f64 = Exp1.sample(&mut self.inner);
        x * mean
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer on `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Multiplicative jitter `exp(N(0, sigma^2))`, truncated to `±4 sigma`.
    pub fn lognormal_jitter(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 1.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.inner);
        (sigma * z.clamp(-4.0, 4.0)).exp()
    }

    /// Lognormal sample for callers that want the untruncated distribution.
    pub fn lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        LogNormal::new(mu, sigma).map(|d| d.sample(&mut self.inner)).unwrap_or(mu.exp())
    }
}

/// Stand-alone exponential draw (the operation form used by tests and docs).
pub fn draw_exponential(stream: &mut RngStream, mean: f64) -> Result<VirtualTime, CoreError> {
    stream.exponential(mean)
}
