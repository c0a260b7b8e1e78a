//! Seeded sampling primitives.
//!
//! All sampling goes through [`SampleRng`]: ChaCha8 keyed by
//! `seed_from_u64(seed)`, bounded draws by Lemire's widening multiply with
//! rejection, and without-replacement selection by a partial Fisher-Yates
//! shuffle over `0..n`. The stream is fixed by the ChaCha8 definition, so a
//! seed selects the same indices on every platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct SampleRng {
    inner: ChaCha8Rng,
}

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `count` distinct indices from `0..n`, sorted ascending.
pub fn sample_without_replacement(n: usize, count: usize, rng: &mut SampleRng) -> Vec<usize> {
    assert!(count <= n, "cannot draw {count} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool.sort_unstable();
    pool
}
