//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by the
//! experiment seed, a purpose tag and an index (chain, row, epoch...), so
//! results never depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the random streams used by different parts of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    DatasetRows = 1,
    DatasetSplit = 2,
    Init = 3,
    DenoiserTraining = 4,
    DenoiserValidation = 5,
    PreferenceTraining = 6,
    PreferenceValidation = 7,
    Sampling = 8,
    MonteCarlo = 9,
    Probe = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// An independent stream for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: StreamTag, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(tag as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
