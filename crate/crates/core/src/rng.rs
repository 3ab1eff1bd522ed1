//! Keyed random substreams.
//!
//! Every random draw in the pipeline comes from a generator keyed by
//! `(seed, stream tag, sample id, index)`, so results never depend on the
//! order in which samples are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags keep substreams of different stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Pose = 1,
    DetectorNoise = 2,
    Split = 3,
    Init = 4,
    Shuffle = 5,
    Hypothesis = 6,
    Test = 7,
}

pub fn keyed(seed: u64, stream: Stream, sample_id: u64, index: u64) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&sample_id.to_le_bytes());
    key[24..].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
