//! Counter-based pseudo-random numbers.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so event
//! generators and randomized decision rules can be replayed slot by slot
//! without carrying generator state, and reproduced in any language that
//! implements SplitMix64.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterRng {
    pub seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn u64_at(&self, stream: u64, counter: u64) -> u64 {
        let key = mix64(self.seed.wrapping_add(GOLDEN.wrapping_mul(stream.wrapping_add(1))));
        mix64(key ^ counter.wrapping_mul(GOLDEN).wrapping_add(GOLDEN))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit_at(&self, stream: u64, counter: u64) -> f64 {
        (self.u64_at(stream, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn index_at(&self, stream: u64, counter: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.unit_at(stream, counter) * n as f64) as usize).min(n - 1)
    }

    /// Sample an index from non-negative weights.
    pub fn weighted_at(&self, stream: u64, counter: u64, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.unit_at(stream, counter) * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}
