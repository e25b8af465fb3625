//! Counter-based, splittable 64-bit generator.
//!
//! Algorithm ("SplitMix64 in counter mode with keyed substreams"):
//!
//! * A generator is a pair `(key, counter)`. The `n`-th output (`n ≥ 1`) is
//!   `mix64(key + n · 0x9E3779B97F4A7C15)` with wrapping arithmetic, where
//!   `mix64` is the SplitMix64 finalizer
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! * `CounterRng::new(seed)` uses `key = mix64(seed)`.
//! * `substream(id)` derives a child with
//!   `key = mix64(parent_key ^ mix64(id + 0xD1B54A32D192ED03))` and counter 0.
//!   The child depends only on the parent key, never on how many values the
//!   parent has produced, so `(seed, path of ids)` names a stream exactly.
//! * `uniform()` is `(next_u64() >> 11) · 2⁻⁵³`; `normal()` is one Box–Muller
//!   draw `sqrt(−2 ln(1 − u₁)) · cos(2π u₂)`; `below(n)` is Lemire's
//!   multiply-and-reject method.
//!
//! The sequence is bit-identical on every platform, which is what makes
//! datasets, augmentations and training runs reproducible regardless of the
//! order in which items are processed.

use crate::math;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: mix64(seed),
            counter: 0,
        }
    }

    /// Independent child stream named by `id`.
    pub fn substream(&self, id: u64) -> Self {
        CounterRng {
            key: mix64(self.key ^ mix64(id.wrapping_add(STREAM_SALT))),
            counter: 0,
        }
    }

    /// Value at an absolute counter position, without advancing.
    #[inline]
    pub fn at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_mul(GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        self.at(self.counter)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the range is empty.
    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform integer in `[0, n)`. `n` must be non-zero.
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

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn inclusive(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + self.below((hi - lo + 1) as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
