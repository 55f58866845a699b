//! Seeded Monte Carlo sweeps over the array size.
//!
//! Every trial owns its random substreams (see [`crate::rng`]), trials run on
//! the rayon pool and partial results are reduced in trial order, so a sweep
//! is bit-reproducible from `(config, master_seed)` whatever the thread count.
//!
//! Schemes are compared on paired samples: for a given trial index both
//! schemes see the same drop and, for rates, the same fading and training
//! noise.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_location_aware_with, assign_random, MatchingRule};
use crate::error::{Error, Result};
use crate::geometry::{CellConfig, UserDrop, UserLocation};
use crate::interference::{to_db, LosGeometry, PairCounting};
use crate::pilots::PilotAssignment;
use crate::receiver::{ergodic_rates, Detector, LinkConfig};
use crate::rng::{substream, substream_indexed, Purpose};
use crate::training::TrainingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LocationAware,
    Random,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::LocationAware => "location-aware",
            Scheme::Random => "random",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "location-aware" | "proposed" => Ok(Scheme::LocationAware),
            "random" => Ok(Scheme::Random),
            other => Err(Error::invalid(
                "scheme",
                format!("unknown scheme `{other}` (expected location-aware or random)"),
            )),
        }
    }
}

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_users: usize,
    pub tau: usize,
    pub coherence_symbols: usize,
    pub pathloss_exponent: f64,
    pub cell_radius_m: f64,
    pub r_min_m: f64,
    /// Linear K-factor shared by all users.
    pub k_factor: f64,
    /// Uplink transmit power over unit noise, linear.
    pub p_u: f64,
    pub antenna_spacing_ratio: f64,
    pub m_sweep: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub trials_interference: usize,
    pub trials_rate: usize,
    /// Fading / training-noise realizations averaged per drop in rate sweeps.
    pub fading_per_drop: usize,
    pub master_seed: u64,
    pub pair_counting: PairCounting,
    pub matching: MatchingRule,
    pub detector: Detector,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_users: 20,
            tau: 10,
            coherence_symbols: 196,
            pathloss_exponent: 3.8,
            cell_radius_m: 1000.0,
            r_min_m: 100.0,
            k_factor: 3.0,
            p_u: 10.0,
            antenna_spacing_ratio: 0.5,
            m_sweep: vec![20, 50, 100, 150, 200],
            schemes: vec![Scheme::LocationAware, Scheme::Random],
            trials_interference: 5000,
            trials_rate: 1000,
            fading_per_drop: 50,
            master_seed: 1,
            pair_counting: PairCounting::default(),
            matching: MatchingRule::default(),
            detector: Detector::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users", "need at least one user"));
        }
        if self.tau == 0 || self.tau > self.n_users {
            return Err(Error::TauExceedsUsers {
                tau: self.tau,
                n_users: self.n_users,
            });
        }
        if self.tau > self.coherence_symbols {
            return Err(Error::invalid(
                "coherence_symbols",
                format!("must be at least tau = {}", self.tau),
            ));
        }
        if !(self.r_min_m > 0.0 && self.r_min_m < self.cell_radius_m) {
            return Err(Error::invalid(
                "r_min_m",
                format!("need 0 < r_min_m < cell_radius_m = {}", self.cell_radius_m),
            ));
        }
        if self.k_factor.is_nan() || self.k_factor < 0.0 {
            return Err(Error::invalid("k_factor", "must be non-negative"));
        }
        if !(self.p_u.is_finite() && self.p_u > 0.0) {
            return Err(Error::invalid("p_u", "must be positive"));
        }
        if self.m_sweep.is_empty() {
            return Err(Error::invalid("m_sweep", "sweep list is empty"));
        }
        if self.m_sweep.contains(&0) {
            return Err(Error::invalid("m_sweep", "antenna counts must be positive"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "no scheme selected"));
        }
        for (name, v) in [
            ("trials_interference", self.trials_interference),
            ("trials_rate", self.trials_rate),
            ("fading_per_drop", self.fading_per_drop),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        self.cell(1).validate()
    }

    pub fn cell(&self, m_antennas: usize) -> CellConfig {
        CellConfig {
            m_antennas,
            cell_radius_m: self.cell_radius_m,
            pathloss_exponent: self.pathloss_exponent,
            antenna_spacing_ratio: self.antenna_spacing_ratio,
        }
    }

    pub fn training(&self) -> Result<TrainingConfig> {
        TrainingConfig::new(self.p_u, self.tau)
    }
}

/// One `(M, scheme)` point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub m_antennas: usize,
    pub scheme: Scheme,
    pub mean_i_tot: f64,
    pub mean_i_tot_db: Option<f64>,
    pub mean_sum_rate: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Uniform user placement: `r ~ U[r_min, r_h]`, `theta ~ U[0, 2 pi)`.
pub fn draw_drop<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> UserDrop {
    let users = (0..config.n_users)
        .map(|_| {
            let r = rng.random_range(config.r_min_m..=config.cell_radius_m);
            let theta = rng.random_range(0.0..TAU);
            UserLocation::new(r, theta, config.k_factor).expect("sampled values are in range")
        })
        .collect();
    UserDrop::new(users).expect("n_users >= 1")
}

fn trial_drop(config: &ExperimentConfig, trial: usize) -> UserDrop {
    draw_drop(
        config,
        &mut substream(config.master_seed, trial as u64, Purpose::Drop),
    )
}

fn trial_random_assignment(config: &ExperimentConfig, trial: usize) -> Result<PilotAssignment> {
    let mut rng = substream(config.master_seed, trial as u64, Purpose::RandomAssignment);
    assign_random(config.n_users, config.tau, &mut rng)
}

fn scheme_assignment(
    scheme: Scheme,
    config: &ExperimentConfig,
    drop: &UserDrop,
    cell: &CellConfig,
    training: &TrainingConfig,
    random: &PilotAssignment,
) -> Result<PilotAssignment> {
    match scheme {
        Scheme::Random => Ok(random.clone()),
        Scheme::LocationAware => {
            Ok(
                assign_location_aware_with(drop, config.tau, cell, training, config.matching)?
                    .assignment,
            )
        }
    }
}

/// Sweep points in output order: `M` outer, scheme inner.
fn points(config: &ExperimentConfig) -> Vec<(usize, Scheme)> {
    config
        .m_sweep
        .iter()
        .flat_map(|&m| config.schemes.iter().map(move |&s| (m, s)))
        .collect()
}

/// Per-trial values for every sweep point, reduced in trial order.
fn reduce_in_order(per_trial: Vec<Vec<f64>>, n_points: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n_points];
    for row in &per_trial {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let t = per_trial.len() as f64;
    acc.into_iter().map(|a| a / t).collect()
}

/// Mean `I_tot` per `(M, scheme)` over `trials_interference` paired drops.
pub fn run_interference_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let training = config.training()?;
    let points = points(config);
    let per_trial: Vec<Vec<f64>> = (0..config.trials_interference)
        .into_par_iter()
        .map(|trial| {
            let drop = trial_drop(config, trial);
            let random = trial_random_assignment(config, trial)?;
            points
                .iter()
                .map(|&(m, scheme)| {
                    let cell = config.cell(m);
                    let a = scheme_assignment(scheme, config, &drop, &cell, &training, &random)?;
                    Ok(LosGeometry::new(&drop, &cell, &training).total(&a, config.pair_counting))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let means = reduce_in_order(per_trial, points.len());
    Ok(points
        .iter()
        .zip(means)
        .map(|(&(m, scheme), mean)| ExperimentRecord {
            m_antennas: m,
            scheme,
            mean_i_tot: mean,
            mean_i_tot_db: to_db(mean),
            mean_sum_rate: None,
            trials: config.trials_interference,
            seed: config.master_seed,
        })
        .collect())
}

/// Mean sum rate (and mean `I_tot`) per `(M, scheme)` over `trials_rate`
/// paired drops, each averaged over `fading_per_drop` realizations.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let training = config.training()?;
    let link = LinkConfig {
        coherence_symbols: config.coherence_symbols,
        detector: config.detector,
    };
    let points = points(config);
    let per_trial: Vec<Vec<f64>> = (0..config.trials_rate)
        .into_par_iter()
        .map(|trial| {
            let drop = trial_drop(config, trial);
            let random = trial_random_assignment(config, trial)?;
            let mut row = Vec::with_capacity(2 * points.len());
            for &(m, scheme) in &points {
                let cell = config.cell(m);
                let a = scheme_assignment(scheme, config, &drop, &cell, &training, &random)?;
                // same stream for every scheme at this (trial, M)
                let mut rng =
                    substream_indexed(config.master_seed, trial as u64, Purpose::Fading, m as u64);
                let report = ergodic_rates(
                    &drop,
                    &a,
                    &cell,
                    &training,
                    &link,
                    config.fading_per_drop,
                    &mut rng,
                )?;
                row.push(report.sum_rate);
                row.push(LosGeometry::new(&drop, &cell, &training).total(&a, config.pair_counting));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let means = reduce_in_order(per_trial, 2 * points.len());
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, &(m, scheme))| ExperimentRecord {
            m_antennas: m,
            scheme,
            mean_i_tot: means[2 * k + 1],
            mean_i_tot_db: to_db(means[2 * k + 1]),
            mean_sum_rate: Some(means[2 * k]),
            trials: config.trials_rate,
            seed: config.master_seed,
        })
        .collect())
}

/// Runs `f` on a dedicated pool of `threads` workers (`None`: rayon default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
    }
}

/// Which sweep produced a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Interference,
    Rate,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Interference => "interference",
            SweepKind::Rate => "rate",
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with a leading `#` metadata line. Contains nothing run-specific
/// beyond the configuration, so reruns produce identical bytes.
pub fn records_to_csv(
    kind: SweepKind,
    config: &ExperimentConfig,
    records: &[ExperimentRecord],
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# pilotassign {} kind={} n_users={} tau={} coherence_symbols={} k_factor={} p_u={} pathloss_exponent={} cell_radius_m={} r_min_m={} fading_per_drop={} pair_counting={} matching={} detector={} seed={}",
        env!("CARGO_PKG_VERSION"),
        kind.as_str(),
        config.n_users,
        config.tau,
        config.coherence_symbols,
        config.k_factor,
        config.p_u,
        config.pathloss_exponent,
        config.cell_radius_m,
        config.r_min_m,
        config.fading_per_drop,
        serde_json::to_value(config.pair_counting).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        serde_json::to_value(config.matching).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        serde_json::to_value(config.detector).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        config.master_seed,
    );
    out.push_str("m,scheme,i_tot,i_tot_db,sum_rate,trials,seed\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.m_antennas,
            r.scheme.as_str(),
            r.mean_i_tot,
            fmt_opt(r.mean_i_tot_db),
            fmt_opt(r.mean_sum_rate),
            r.trials,
            r.seed
        );
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsFile {
    pub kind: SweepKind,
    pub version: String,
    pub config: ExperimentConfig,
    pub records: Vec<ExperimentRecord>,
}

pub fn records_to_json(
    kind: SweepKind,
    config: &ExperimentConfig,
    records: &[ExperimentRecord],
) -> String {
    let file = ResultsFile {
        kind,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config: config.clone(),
        records: records.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::assign_location_aware;
    use crate::interference::total_interference;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            m_sweep: vec![20, 200],
            trials_interference: 40,
            trials_rate: 4,
            fading_per_drop: 3,
            master_seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn drops_are_seeded_and_in_range() {
        let cfg = ExperimentConfig::default();
        let a = trial_drop(&cfg, 3);
        let b = trial_drop(&cfg, 3);
        assert_eq!(a, b);
        assert_ne!(a, trial_drop(&cfg, 4));
        for u in a.users() {
            assert!((100.0..=1000.0).contains(&u.r));
            assert!((0.0..TAU).contains(&u.theta));
            assert_eq!(u.k_factor, 3.0);
        }
    }

    #[test]
    fn mean_distance_is_550() {
        let cfg = ExperimentConfig {
            n_users: 1,
            tau: 1,
            ..Default::default()
        };
        let mut rng = substream(9, 0, Purpose::Drop);
        let n = 100_000;
        let rs: Vec<f64> = (0..n)
            .map(|_| draw_drop(&cfg, &mut rng).users()[0].r)
            .collect();
        let mean = rs.iter().sum::<f64>() / n as f64;
        // sd of U[100, 1000] is 900 / sqrt(12)
        let se = 900.0 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 550.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn single_trial_matches_direct_computation() {
        let cfg = ExperimentConfig {
            trials_interference: 1,
            ..small()
        };
        let recs = run_interference_experiment(&cfg).unwrap();
        let drop = trial_drop(&cfg, 0);
        let training = cfg.training().unwrap();
        let cell = cfg.cell(20);
        let la = assign_location_aware(&drop, 10, &cell, &training).unwrap();
        let direct = total_interference(&drop, &la, &cell, &training, cfg.pair_counting)
            .unwrap()
            .total;
        let rec = recs
            .iter()
            .find(|r| r.m_antennas == 20 && r.scheme == Scheme::LocationAware)
            .unwrap();
        assert_eq!(rec.mean_i_tot, direct);
        let random = trial_random_assignment(&cfg, 0).unwrap();
        let direct = total_interference(&drop, &random, &cell, &training, cfg.pair_counting)
            .unwrap()
            .total;
        let rec = recs
            .iter()
            .find(|r| r.m_antennas == 20 && r.scheme == Scheme::Random)
            .unwrap();
        assert_eq!(rec.mean_i_tot, direct);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = small();
        let one = with_threads(Some(1), || run_interference_experiment(&cfg).unwrap());
        let four = with_threads(Some(4), || run_interference_experiment(&cfg).unwrap());
        assert_eq!(one, four);
        let one = with_threads(Some(1), || run_rate_experiment(&cfg).unwrap());
        let three = with_threads(Some(3), || run_rate_experiment(&cfg).unwrap());
        assert_eq!(
            records_to_csv(SweepKind::Rate, &cfg, &one),
            records_to_csv(SweepKind::Rate, &cfg, &three)
        );
    }

    #[test]
    fn full_training_overhead_gives_zero_rates() {
        let cfg = ExperimentConfig {
            coherence_symbols: 10,
            ..small()
        };
        let recs = run_rate_experiment(&cfg).unwrap();
        assert!(recs.iter().all(|r| r.mean_sum_rate == Some(0.0)));
    }

    #[test]
    fn orthogonal_pilots_make_schemes_equivalent() {
        let cfg = ExperimentConfig {
            n_users: 6,
            tau: 6,
            k_factor: 1e6,
            ..small()
        };
        let recs = run_rate_experiment(&cfg).unwrap();
        // pilot labels differ, so the noise lands on other users; only close
        for pair in recs.chunks(2) {
            let (a, b) = (
                pair[0].mean_sum_rate.unwrap(),
                pair[1].mean_sum_rate.unwrap(),
            );
            assert!((a - b).abs() < 0.05 * a, "{a} vs {b}");
            assert_eq!(pair[0].mean_i_tot, 0.0);
            assert_eq!(pair[1].mean_i_tot, 0.0);
        }
    }

    #[test]
    fn csv_layout() {
        let cfg = small();
        let recs = run_interference_experiment(&cfg).unwrap();
        let csv = records_to_csv(SweepKind::Interference, &cfg, &recs);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# pilotassign "));
        assert!(lines[0].contains("pair_counting=unordered"));
        assert_eq!(lines[1], "m,scheme,i_tot,i_tot_db,sum_rate,trials,seed");
        assert_eq!(lines.len(), 2 + 4);
        assert!(lines[2].starts_with("20,location-aware,"));
        assert!(lines[2].ends_with(",,40,42"));
        let json = records_to_json(SweepKind::Interference, &cfg, &recs);
        let back: ResultsFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.records, recs);
        assert_eq!(back.config, cfg);
    }

    #[test]
    fn config_validation() {
        let bad = [
            ExperimentConfig {
                tau: 21,
                ..Default::default()
            },
            ExperimentConfig {
                m_sweep: vec![],
                ..Default::default()
            },
            ExperimentConfig {
                m_sweep: vec![0],
                ..Default::default()
            },
            ExperimentConfig {
                p_u: 0.0,
                ..Default::default()
            },
            ExperimentConfig {
                r_min_m: 1000.0,
                ..Default::default()
            },
            ExperimentConfig {
                trials_rate: 0,
                ..Default::default()
            },
            ExperimentConfig {
                coherence_symbols: 5,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn scheme_names() {
        assert_eq!("random".parse::<Scheme>().unwrap(), Scheme::Random);
        assert_eq!(
            "location-aware".parse::<Scheme>().unwrap(),
            Scheme::LocationAware
        );
        assert!("greedy".parse::<Scheme>().is_err());
    }
}
