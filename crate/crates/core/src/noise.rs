//! Deterministic per-trial Gaussian noise streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` within an experiment seeded by `base_seed`.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Polarity {
    Normal,
    Negated,
    Silent,
}

/// Source of standard normal draws.
///
/// A negated stream yields exactly `-w` for every draw `w` of the normal
/// stream with the same seed; a silent stream yields zeros but still
/// advances its generator so draw counts stay aligned.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    polarity: Polarity,
    draws: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            polarity: Polarity::Normal,
            draws: 0,
        }
    }

    pub fn negated(seed: u64) -> Self {
        Self {
            polarity: Polarity::Negated,
            ..Self::new(seed)
        }
    }

    pub fn silent(seed: u64) -> Self {
        Self {
            polarity: Polarity::Silent,
            ..Self::new(seed)
        }
    }

    /// One `N(0, 1)` draw.
    pub fn standard_normal(&mut self) -> f64 {
        let w: f64 = self.rng.sample(StandardNormal);
        self.draws += 1;
        match self.polarity {
            Polarity::Normal => w,
            Polarity::Negated => -w,
            Polarity::Silent => 0.0,
        }
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}
