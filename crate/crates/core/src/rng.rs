//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from SplitMix64 (the
//! public-domain generator of Steele, Lea and Flood, reference code at
//! <http://xoshiro.di.unimi.it/splitmix64.c>). Derived quantities use
//! fixed, documented recipes so another implementation can reproduce them
//! bit for bit:
//!
//! * uniform `[0,1)`: `(next_u64() >> 11) * 2^-53`
//! * standard normal: Box–Muller, `sqrt(-2 ln(1-u1)) * cos(2π u2)`, one
//!   normal per pair of uniforms
//! * uniform index below `n`: `floor(uniform * n)`
//! * partial shuffle: forward Fisher–Yates, position `i` swapped with
//!   `i + index_below(n - i)`

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::tensor::Tensor;

pub struct Stream {
    inner: SplitMix64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn index_below(&mut self, n: usize) -> usize {
        let i = (self.uniform() * n as f64) as usize;
        i.min(n.saturating_sub(1))
    }

    /// First `k` entries of a seeded permutation of `0..n`.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.index_below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    pub fn normal_tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn uniform_tensor(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| lo + (hi - lo) * self.uniform())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_value() {
        // first output of splitmix64.c seeded with 0
        let mut s = Stream::new(0);
        assert_eq!(s.next_u64(), 0xe220a8397b1dcdaf);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(7);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn choose_distinct_is_distinct() {
        let mut s = Stream::new(3);
        let mut v = s.choose_distinct(100, 35);
        assert_eq!(v.len(), 35);
        v.sort();
        v.dedup();
        assert_eq!(v.len(), 35);
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }
}
