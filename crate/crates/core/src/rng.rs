//! Seeded, platform-stable random streams.
//!
//! Backed by ChaCha8, a counter-based generator whose output depends only on
//! the 64-bit seed. Per-instance streams are derived as
//! `seed ^ splitmix64(instance_id)`.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// SplitMix64 finalizer, used to hash instance ids into sub-seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for instance `instance_id` of a run seeded with `seed`.
pub fn sub_seed(seed: u64, instance_id: u64) -> u64 {
    seed ^ splitmix64(instance_id)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for environment instance `instance_id`.
    pub fn for_instance(seed: u64, instance_id: u64) -> Self {
        Self::new(sub_seed(seed, instance_id))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[lo, hi)`; returns `lo` when `lo == hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::InvalidRange { lo, hi });
        }
        if lo == hi {
            return Ok(lo);
        }
        let v = lo + (hi - lo) * self.next_f64();
        // rounding can land exactly on `hi`
        Ok(if v >= hi { lo.max(hi - (hi - lo) * f64::EPSILON) } else { v })
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(1);
        for _ in 0..100 {
            assert_eq!(
                a.uniform(0.0, 1.0).unwrap().to_bits(),
                b.uniform(0.0, 1.0).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn degenerate_interval() {
        let mut r = Rng::new(99);
        assert_eq!(r.uniform(5.0, 5.0).unwrap(), 5.0);
    }

    #[test]
    fn inverted_interval_is_error() {
        let mut r = Rng::new(0);
        assert!(matches!(r.uniform(1.0, 0.0), Err(Error::InvalidRange { .. })));
        assert!(r.uniform(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn uniform_mean_converges() {
        let mut r = Rng::new(12345);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = r.uniform(0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&v));
            sum += v;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn instance_streams_differ() {
        let mut a = Rng::for_instance(7, 0);
        let mut b = Rng::for_instance(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(sub_seed(7, 3), 7 ^ splitmix64(3));
    }

    #[test]
    fn stream_is_platform_stable() {
        // frozen first draws for seed 0; guards against silent backend changes
        let mut r = Rng::new(0);
        assert_eq!(r.next_u64(), 13080132717333068652);
        assert_eq!(r.next_u64(), 8594738769458413623);
    }
}
