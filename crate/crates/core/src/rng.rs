//! Seed handling.
//!
//! Every random choice in a run flows from one base seed through
//! [`split_seed`], so trial sets can be extended without reshuffling the
//! seeds of earlier trials and independent subsystems (key material, path
//! sampling, adversary decisions) never share an RNG stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels for [`split_seed`]. Keeping them in one place makes the
/// derivation auditable from a config file.
pub mod stream {
    pub const KEYS: u64 = 0x01;
    pub const FORMING: u64 = 0x02;
    pub const HANDLES: u64 = 0x03;
    pub const CORRUPTION: u64 = 0x04;
    pub const ADVERSARY: u64 = 0x05;
    pub const ABORT: u64 = 0x06;
    pub const INPUT: u64 = 0x07;
    pub const TRIAL: u64 = 0x100;
}

/// SplitMix64-style mix of a base seed and a stream/trial label.
pub fn split_seed(base: u64, label: u64) -> u64 {
    let mut z = base ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `t`-th trial of an experiment with the given base seed.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    split_seed(base, stream::TRIAL.wrapping_add(trial))
}

/// Deterministic RNG for a derived seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn split_is_deterministic_and_label_sensitive() {
        assert_eq!(split_seed(7, 1), split_seed(7, 1));
        assert_ne!(split_seed(7, 1), split_seed(7, 2));
        assert_ne!(split_seed(7, 1), split_seed(8, 1));
    }

    #[test]
    fn trial_seeds_are_stable_under_extension() {
        let first: Vec<u64> = (0..10).map(|t| trial_seed(42, t)).collect();
        let extended: Vec<u64> = (0..20).map(|t| trial_seed(42, t)).collect();
        assert_eq!(first, extended[..10]);
    }

    #[test]
    fn rng_streams_differ() {
        let mut a = seeded_rng(split_seed(1, stream::KEYS));
        let mut b = seeded_rng(split_seed(1, stream::FORMING));
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
