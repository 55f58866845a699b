//! Shared fixtures for the criterion benches.

use pilotassign::rng::{substream, Purpose};
use pilotassign::{draw_drop, ExperimentConfig, UserDrop};

/// Default-geometry drop of `n_users` users.
pub fn drop_of(n_users: usize, seed: u64) -> UserDrop {
    let cfg = ExperimentConfig {
        n_users,
        tau: 1,
        ..Default::default()
    };
    draw_drop(&cfg, &mut substream(seed, 0, Purpose::Drop))
}
