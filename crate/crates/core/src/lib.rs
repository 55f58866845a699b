//! Location-aware pilot assignment for a single-cell massive MIMO uplink.
//!
//! The crate models an `M`-antenna uniform linear array serving `N`
//! single-antenna users over Rician fading channels. Users that share one of
//! the `tau` orthogonal pilot sequences contaminate each other's channel
//! estimates; the deterministic line-of-sight part of the channel, which is
//! known from user locations alone, lets the base station pick which users
//! should share a pilot.
//!
//! Module map:
//!
//! - [`geometry`]: user drops, pathloss, ULA steering vectors, Rician channels.
//! - [`pilots`]: pilot assignments and the pilot / correlation matrices.
//! - [`training`]: uplink training and least-squares NLOS estimation.
//! - [`receiver`]: the per-user combiner, instantaneous SINR and ergodic rates.
//! - [`interference`]: closed-form LOS interference and the `I_tot` metric.
//! - [`assignment`]: the tiered location-aware assignment, the random
//!   baseline and an exhaustive oracle for small instances.
//! - [`harness`]: seeded, paired Monte Carlo sweeps over antenna counts.
//!
//! User indices are 0-based inside the library and 1-based in every
//! serialized artifact (drop files, assignment JSON, reports).

pub mod assignment;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod interference;
pub mod pilots;
pub mod receiver;
pub mod rng;
pub mod training;

pub use assignment::{
    assign_exhaustive, assign_location_aware, assign_location_aware_with, assign_random,
    balanced_partition_count, partition_tiers, unique_min_matching, AssignmentOutcome,
    MatchingRule, TierPartition,
};
pub use error::{Error, Result};
pub use geometry::{
    draw_channel, los_steering, pathloss, CellConfig, ChannelRealization, LosComponent, UserDrop,
    UserLocation,
};
pub use harness::{
    draw_drop, records_to_csv, records_to_json, run_interference_experiment, run_rate_experiment,
    with_threads, ExperimentConfig, ExperimentRecord, ResultsFile, Scheme, SweepKind,
};
pub use interference::{
    asymptotic_denominator, dirichlet_ratio, los_cross_product, pairwise_interference,
    total_interference, unit_kernel_sweep, InterferenceReport, LosGeometry, PairCounting,
    PairwiseInterference,
};
pub use pilots::{build_pilot_matrix, validate, PilotAssignment, PilotMatrix, Violation};
pub use receiver::{
    combiner, ergodic_rates, instantaneous_sinr, sum_rate, Detector, LinkConfig, RateReport,
};
pub use training::{ls_estimate, received_training, ChannelEstimate, TrainingConfig};

/// Complex baseband sample type used throughout.
pub type C64 = num_complex::Complex64;
