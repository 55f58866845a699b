//! Per-trial random substreams.
//!
//! Every trial draws from its own ChaCha stream keyed by
//! `(master_seed, trial_index, purpose)`, so results do not depend on how
//! trials are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Drop = 1,
    RandomAssignment = 2,
    Fading = 3,
}

pub fn substream(master_seed: u64, trial: u64, purpose: Purpose) -> SimRng {
    substream_indexed(master_seed, trial, purpose, 0)
}

/// Like [`substream`], with one more key component (e.g. the antenna count
/// of a sweep point).
pub fn substream_indexed(master_seed: u64, trial: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&trial.to_le_bytes());
    seed[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    seed[24..].copy_from_slice(&index.to_le_bytes());
    SimRng::from_seed(seed)
}
