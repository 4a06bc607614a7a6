//! Seeded random streams for reproducible experiments.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (`seed_from_u64`).
//! Independent sub-streams of one experiment seed are obtained with the
//! generator's 2^128-step jump function. Normal deviates come from the
//! Box–Muller transform, using both outputs of each pair.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Sub-stream identifiers used by the experiment pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Solution = 0,
    Encoding = 1,
    Faults = 2,
    Checks = 3,
}

#[derive(Debug, Clone)]
pub struct Stream {
    rng: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// The `id`-th jump-separated sub-stream of `seed`.
    pub fn sub_stream(seed: u64, id: StreamId) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..id as u32 {
            rng.jump();
        }
        Self {
            rng,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_MINUS_53
    }

    /// Standard normal deviate (Box–Muller).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - uniform() lies in (0, 1], keeping the logarithm finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * theta.sin());
        radius * theta.cos()
    }

    /// Uniform integer in `[0, bound)` by rejection sampling. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    /// `count` distinct values from `[0, n)`, uniformly without replacement,
    /// in draw order (partial Fisher–Yates).
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Stream::new(7);
        let mut b = Stream::new(7);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn sub_streams_differ() {
        let mut a = Stream::sub_stream(7, StreamId::Solution);
        let mut b = Stream::sub_stream(7, StreamId::Encoding);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn open_uniform_stays_inside() {
        let mut s = Stream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform_open();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(42);
        let m = 200_000;
        let xs: Vec<f64> = (0..m).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        // 5 sigma bands for the sample mean and variance
        assert!(mean.abs() < 5.0 / (m as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn distinct_sample() {
        let mut s = Stream::new(3);
        let v = s.sample_distinct(10, 10);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert!(s.sample_distinct(5, 0).is_empty());
    }
}
