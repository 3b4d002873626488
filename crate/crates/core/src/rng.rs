//! Seeded random streams.
//!
//! All randomness goes through xoshiro256++ seeded with `seed_from_u64`
//! (SplitMix64 state expansion). Parameter initialization draws from the
//! stream as seeded; shuffling draws from the same seed after one
//! `jump()` (2^128 steps), so the two never overlap.
//!
//! Derived draws are fixed here so runs are portable:
//! - unit float: `(next_u64() >> 11) · 2^-53`, in `[0, 1)`
//! - bounded index in `[0, n)`: `(next_u64() as u128 · n) >> 64`
//! - shuffle: Fisher–Yates from the last index down to 1

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct SkanRng(Xoshiro256PlusPlus);

impl SkanRng {
    /// Stream used for parameter initialization.
    pub fn for_init(seed: u64) -> Self {
        SkanRng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Stream used for epoch shuffling.
    pub fn for_shuffle(seed: u64) -> Self {
        let mut inner = Xoshiro256PlusPlus::seed_from_u64(seed);
        inner.jump();
        SkanRng(inner)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    #[inline]
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_f64()
    }

    /// Index in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
