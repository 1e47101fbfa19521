//! Counter-based seed derivation.
//!
//! Every random quantity in a simulation is drawn from a dedicated ChaCha8
//! stream whose seed is a pure function of `(base_seed, sim index, purpose,
//! sub-index)`. Adding a model or an experiment therefore never shifts the
//! numbers any other consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for simulation `index` from a base seed.
pub fn split(base: u64, index: u64) -> u64 {
    mix64(mix64(base) ^ mix64(index.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// What a stream is used for. The discriminant is mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    World = 1,
    ExpertTraining = 2,
    ExpertNoise = 3,
    ExpertTrace = 4,
    StartStates = 5,
    LearnerActions = 6,
    LearnerPlanning = 7,
    LearnerNoise = 8,
    RewardSwap = 9,
    Optimizer = 10,
    ExpertPlanning = 11,
}

/// Opens the stream for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose) -> Stream {
    ChaCha8Rng::seed_from_u64(split(seed, purpose as u64))
}

/// Opens a stream for `purpose` that is further keyed by `sub` (e.g. an
/// episode index).
pub fn substream(seed: u64, purpose: Purpose, sub: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(split(split(seed, purpose as u64), sub))
}
