//! Seeded, counter-based random streams.
//!
//! Every random draw in the verifier is addressed by (run seed, sample
//! index): sample `i` gets its own ChaCha stream, so results do not depend on
//! how samples are partitioned across workers, and extending a run re-uses
//! the exact same prefix of draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Factory for per-sample RNG streams derived from one seed.
#[derive(Debug, Clone, Copy)]
pub struct SampleStreams {
    seed: u64,
}

impl SampleStreams {
    pub fn new(seed: u64) -> Self {
        SampleStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index.wrapping_add(1));
        rng
    }

    /// Uniform point in [-1, 1]^dims for sample `index`.
    pub fn unit_box_point(&self, index: u64, dims: usize) -> Vec<f64> {
        let mut rng = self.rng(index);
        (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }
}

/// Deterministic sub-seed derivation for named purposes (rollouts, batch
/// sampling, negatives, ...), so independent machinery never shares a stream.
pub fn derive_seed(base: u64, purpose: &str, index: u64) -> u64 {
    // FNV-1a over the purpose tag, then mix in the index.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in purpose.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= base.rotate_left(17);
    h = h.wrapping_mul(0x100000001b3);
    h ^= index;
    h.wrapping_mul(0x2545F4914F6CDD1D)
}

pub fn seeded_rng(base: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_index_independent() {
        let s = SampleStreams::new(42);
        let a = s.unit_box_point(7, 4);
        let b = s.unit_box_point(7, 4);
        assert_eq!(a, b);
        // drawing other indices in between changes nothing
        let _ = s.unit_box_point(3, 4);
        let c = s.unit_box_point(7, 4);
        assert_eq!(a, c);
    }

    #[test]
    fn distinct_indices_give_distinct_points() {
        let s = SampleStreams::new(1);
        assert_ne!(s.unit_box_point(0, 6), s.unit_box_point(1, 6));
    }

    #[test]
    fn points_live_in_the_unit_box() {
        let s = SampleStreams::new(9);
        for i in 0..1000 {
            for v in s.unit_box_point(i, 8) {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn derived_seeds_separate_purposes() {
        assert_ne!(derive_seed(5, "rollout", 0), derive_seed(5, "batch", 0));
        assert_ne!(derive_seed(5, "rollout", 0), derive_seed(5, "rollout", 1));
        assert_eq!(derive_seed(5, "rollout", 3), derive_seed(5, "rollout", 3));
    }
}
