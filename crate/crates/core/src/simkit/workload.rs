//! Workload generation: uniform, hotspot, and sequential block streams.
//!
//! The hotspot pattern keeps the hot set as a contiguous prefix of a
//! *permuted* block space, so hot blocks stripe across every drive instead of
//! clustering on a few strips. The permutation is a small seeded Feistel
//! network with cycle walking: deterministic, bijective, and O(1) memory for
//! any range.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccessPattern {
    UniformRandom,
    Hotspot {
        /// Fraction of the block space that is hot.
        space_frac: f64,
        /// Fraction of accesses that go to the hot set.
        access_frac: f64,
    },
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub block_size: u64,
    pub io_range: u64,
    pub pattern: AccessPattern,
    pub threads: usize,
    pub queue_depth: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.block_size == 0 {
            return Err(SimError::BadConfig("block size must be positive".into()));
        }
        if self.io_range % self.block_size != 0 {
            return Err(SimError::BadConfig(format!(
                "block size {} must divide io range {}",
                self.block_size, self.io_range
            )));
        }
        if let AccessPattern::Hotspot {
            space_frac,
            access_frac,
        } = self.pattern
        {
            for (name, v) in [("hot space", space_frac), ("hot access", access_frac)] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(SimError::BadConfig(format!(
                        "{name} fraction {v} outside (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Outstanding-request window: the global dispatch limit.
    pub fn window_slots(&self) -> usize {
        self.threads * self.queue_depth
    }

    pub fn total_blocks(&self) -> u64 {
        self.io_range / self.block_size
    }
}

/// Seeded bijection on `[0, domain)` built from a 4-round Feistel network
/// over the next even-width power of two, with cycle walking back into the
/// domain.
#[derive(Debug, Clone)]
pub struct IndexPermutation {
    domain: u64,
    half_bits: u32,
    half_mask: u64,
    keys: [u64; 4],
}

fn mix(x: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl IndexPermutation {
    pub fn new(domain: u64, seed: u64) -> Self {
        assert!(domain > 0);
        let bits = 64 - (domain - 1).max(1).leading_zeros();
        let half_bits = bits.div_ceil(2).max(1);
        let keys = [
            mix(seed ^ 0xa076_1d64_78bd_642f),
            mix(seed ^ 0xe703_7ed1_a0b4_28db),
            mix(seed ^ 0x8ebc_6af0_9c88_c6e3),
            mix(seed ^ 0x5899_65cc_7537_4cc3),
        ];
        Self {
            domain,
            half_bits,
            half_mask: (1u64 << half_bits) - 1,
            keys,
        }
    }

    fn encrypt(&self, x: u64) -> u64 {
        let mut left = x >> self.half_bits;
        let mut right = x & self.half_mask;
        for &key in &self.keys {
            let next = left ^ (mix(right ^ key) & self.half_mask);
            left = right;
            right = next;
        }
        (left << self.half_bits) | right
    }

    pub fn apply(&self, index: u64) -> u64 {
        debug_assert!(index < self.domain);
        let mut x = index;
        loop {
            x = self.encrypt(x);
            if x < self.domain {
                return x;
            }
        }
    }
}

/// Draws the block stream for one simulation.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    total: u64,
    pattern: AccessPattern,
    hot_count: u64,
    permutation: Option<IndexPermutation>,
    cursor: u64,
}

impl BlockSampler {
    pub fn new(spec: &WorkloadSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let total = spec.total_blocks();
        let (hot_count, permutation) = match spec.pattern {
            AccessPattern::Hotspot { space_frac, .. } => {
                if total < 2 {
                    return Err(SimError::BadConfig(
                        "hotspot pattern needs at least 2 blocks".into(),
                    ));
                }
                let hot = ((total as f64 * space_frac).round() as u64).clamp(1, total - 1);
                (hot, Some(IndexPermutation::new(total, spec.seed)))
            }
            _ => (0, None),
        };
        Ok(Self {
            total,
            pattern: spec.pattern,
            hot_count,
            permutation,
            cursor: 0,
        })
    }

    pub fn total_blocks(&self) -> u64 {
        self.total
    }

    pub fn next_block(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        match self.pattern {
            AccessPattern::UniformRandom => rng.random_range(0..self.total),
            AccessPattern::Sequential => {
                let block = self.cursor;
                self.cursor = (self.cursor + 1) % self.total;
                block
            }
            AccessPattern::Hotspot { access_frac, .. } => {
                let hot = rng.random::<f64>() < access_frac;
                let index = if hot {
                    rng.random_range(0..self.hot_count)
                } else {
                    rng.random_range(self.hot_count..self.total)
                };
                self.permutation.as_ref().unwrap().apply(index)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn permutation_is_a_bijection() {
        for domain in [1u64, 2, 7, 64, 1000, 4097] {
            let perm = IndexPermutation::new(domain, 99);
            let mut seen = vec![false; domain as usize];
            for i in 0..domain {
                let out = perm.apply(i);
                assert!(out < domain);
                assert!(!seen[out as usize], "collision at domain {domain}");
                seen[out as usize] = true;
            }
        }
    }

    #[test]
    fn hotspot_concentrates_accesses() {
        let spec = WorkloadSpec {
            block_size: 4096,
            io_range: 4096 * 10_000,
            pattern: AccessPattern::Hotspot {
                space_frac: 0.05,
                access_frac: 0.95,
            },
            threads: 1,
            queue_depth: 1,
            seed: 7,
        };
        let mut sampler = BlockSampler::new(&spec).unwrap();
        let perm = IndexPermutation::new(10_000, 7);
        let hot: std::collections::HashSet<u64> = (0..500).map(|i| perm.apply(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        let hot_hits = (0..draws)
            .filter(|_| hot.contains(&sampler.next_block(&mut rng)))
            .count();
        let frac = hot_hits as f64 / draws as f64;
        assert!((frac - 0.95).abs() < 0.01, "hot fraction {frac}");
    }

    #[test]
    fn sequential_wraps() {
        let spec = WorkloadSpec {
            block_size: 4096,
            io_range: 4096 * 3,
            pattern: AccessPattern::Sequential,
            threads: 1,
            queue_depth: 1,
            seed: 0,
        };
        let mut sampler = BlockSampler::new(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blocks: Vec<u64> = (0..7).map(|_| sampler.next_block(&mut rng)).collect();
        assert_eq!(blocks, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn bad_fractions_rejected() {
        let mut spec = WorkloadSpec {
            block_size: 4096,
            io_range: 4096 * 100,
            pattern: AccessPattern::Hotspot {
                space_frac: 0.0,
                access_frac: 0.95,
            },
            threads: 1,
            queue_depth: 1,
            seed: 0,
        };
        assert!(spec.validate().is_err());
        spec.pattern = AccessPattern::Hotspot {
            space_frac: 0.05,
            access_frac: 1.0,
        };
        assert!(spec.validate().is_err());
        spec.block_size = 4000;
        assert!(spec.validate().is_err());
    }
}
