//! Uplink data detection, SINR and ergodic rates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CellConfig, ChannelRealization, LosComponent, UserDrop};
use crate::pilots::{build_pilot_matrix, PilotAssignment};
use crate::training::{ls_estimate, received_training, ChannelEstimate, TrainingConfig};

/// Linear detector built from the channel estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    /// `a_n = g_hat_n / (g_hat_n^H g_hat_n)`, the detector the interference
    /// analysis is derived for.
    #[default]
    NormalizedMatched,
    /// Pseudo-inverse zero forcing, `A = G_hat (G_hat^H G_hat)^-1`.
    ZeroForcing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Coherence interval `T` in symbols.
    pub coherence_symbols: usize,
    pub detector: Detector,
}

impl LinkConfig {
    pub fn new(coherence_symbols: usize) -> Self {
        LinkConfig {
            coherence_symbols,
            detector: Detector::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Mean of `log2(1 + SINR)` per user, bits/s/Hz.
    pub per_user_rate: Vec<f64>,
    /// Standard error of each per-user mean.
    pub per_user_stderr: Vec<f64>,
    /// `(T - tau) / T` times the sum of per-user rates.
    pub sum_rate: f64,
    pub trials: usize,
}

/// Applies the training-overhead prefactor `(T - tau) / T` to the rate sum.
pub fn sum_rate(per_user_rate: &[f64], coherence_symbols: usize, tau: usize) -> f64 {
    let t = coherence_symbols as f64;
    (t - tau as f64) / t * per_user_rate.iter().sum::<f64>()
}

/// Combining vector of `user` for the default detector.
pub fn combiner(estimate: &ChannelEstimate, user: usize) -> Result<DVector<Complex64>> {
    let g = estimate.g_hat.column(user);
    let energy = g.norm_squared();
    if energy.is_nan() || energy <= 0.0 || !energy.is_finite() {
        return Err(Error::DegenerateChannel { user });
    }
    Ok(g.into_owned() / Complex64::from(energy))
}

/// All combining vectors as the columns of an `M x N` matrix.
pub fn combiner_matrix(
    estimate: &ChannelEstimate,
    detector: Detector,
) -> Result<DMatrix<Complex64>> {
    match detector {
        Detector::NormalizedMatched => {
            let mut a = estimate.g_hat.clone();
            for user in 0..a.ncols() {
                let energy = a.column(user).norm_squared();
                if energy.is_nan() || energy <= 0.0 || !energy.is_finite() {
                    return Err(Error::DegenerateChannel { user });
                }
                a.column_mut(user).unscale_mut(energy);
            }
            Ok(a)
        }
        Detector::ZeroForcing => {
            let g = &estimate.g_hat;
            let gram = g.adjoint() * g;
            let inv = gram
                .try_inverse()
                .ok_or(Error::DegenerateChannel { user: 0 })?;
            Ok(g * inv)
        }
    }
}

/// SINR of every user given the combiners and the true channel `g`.
pub fn sinr_all(a: &DMatrix<Complex64>, g: &DMatrix<Complex64>, p_u: f64) -> Vec<f64> {
    let cross = a.adjoint() * g;
    (0..g.ncols())
        .map(|n| {
            let row = cross.row(n);
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            let own = row[n].norm_sqr();
            let interference = total - own;
            let noise = a.column(n).norm_squared();
            p_u * own / (p_u * interference + noise)
        })
        .collect()
}

pub fn instantaneous_sinr(
    estimate: &ChannelEstimate,
    chan: &ChannelRealization,
    cfg: &TrainingConfig,
    user: usize,
) -> Result<f64> {
    let a = combiner(estimate, user)?;
    let g = chan.full();
    let p_u = cfg.p_u();
    let mut interference = 0.0;
    let mut own = 0.0;
    for i in 0..g.ncols() {
        let v = a.dotc(&g.column(i)).norm_sqr();
        if i == user {
            own = v;
        } else {
            interference += v;
        }
    }
    Ok(p_u * own / (p_u * interference + a.norm_squared()))
}

/// Monte Carlo ergodic rates for one drop and one pilot assignment.
///
/// Each trial draws fresh NLOS fading and fresh training noise from `rng`,
/// in that order. Two calls fed identically-seeded streams see identical
/// channels and noise, whatever the assignment.
pub fn ergodic_rates<R: Rng + ?Sized>(
    drop: &UserDrop,
    assignment: &PilotAssignment,
    cell: &CellConfig,
    cfg: &TrainingConfig,
    link: &LinkConfig,
    trials: usize,
    rng: &mut R,
) -> Result<RateReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    if cfg.tau() > link.coherence_symbols {
        return Err(Error::invalid(
            "coherence_symbols",
            format!(
                "coherence interval {} is shorter than the pilot length {}",
                link.coherence_symbols,
                cfg.tau()
            ),
        ));
    }
    let n = drop.len();
    let pilots = build_pilot_matrix(assignment, n)?;
    let los = LosComponent::new(drop, cell);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..trials {
        let chan = los.draw(rng);
        let y = received_training(&chan, &pilots, cfg, rng)?;
        let est = ls_estimate(&y, &chan.g_los, &pilots, cfg)?;
        let a = combiner_matrix(&est, link.detector)?;
        for (user, s) in sinr_all(&a, &chan.full(), cfg.p_u())
            .into_iter()
            .enumerate()
        {
            let rate = (1.0 + s).log2();
            if !rate.is_finite() {
                return Err(Error::DegenerateChannel { user });
            }
            sum[user] += rate;
            sum_sq[user] += rate * rate;
        }
    }
    let t = trials as f64;
    let per_user_rate: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let per_user_stderr = per_user_rate
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| {
            if trials < 2 {
                0.0
            } else {
                ((sq - t * m * m).max(0.0) / (t - 1.0) / t).sqrt()
            }
        })
        .collect();
    Ok(RateReport {
        sum_rate: sum_rate(&per_user_rate, link.coherence_symbols, cfg.tau()),
        per_user_rate,
        per_user_stderr,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UserLocation;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn estimate_of(g: DMatrix<Complex64>) -> ChannelEstimate {
        let zeros = DMatrix::zeros(g.nrows(), g.ncols());
        ChannelEstimate {
            g_hat: g,
            g_hat_nlos: zeros,
        }
    }

    fn realization(g: DMatrix<Complex64>) -> ChannelRealization {
        let n = g.ncols();
        ChannelRealization {
            g_nlos: DMatrix::zeros(g.nrows(), n),
            g_los: g,
            beta: vec![1.0; n],
        }
    }

    #[test]
    fn combiner_of_unit_vector() {
        let mut g = DMatrix::zeros(4, 1);
        g[(0, 0)] = Complex64::new(1.0, 0.0);
        let a = combiner(&estimate_of(g.clone()), 0).unwrap();
        assert_eq!(a, g.column(0).into_owned());
    }

    #[test]
    fn combiner_normalizes_gain_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DMatrix::from_fn(6, 2, |_, _| crate::geometry::complex_gaussian(&mut rng));
        let est = estimate_of(g.clone());
        let a = combiner(&est, 1).unwrap();
        let gain = a.dotc(&g.column(1));
        assert_relative_eq!(gain.re, 1.0, epsilon = 1e-14);
        assert!(gain.im.abs() < 1e-14);
        let scaled = combiner(&estimate_of(&g * Complex64::from(3.0)), 1).unwrap();
        assert!((scaled * Complex64::from(3.0) - &a).camax() < 1e-15);
    }

    #[test]
    fn sinr_is_scale_invariant_in_the_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DMatrix::from_fn(6, 3, |_, _| crate::geometry::complex_gaussian(&mut rng));
        let noisy = g.map(|z| z + Complex64::new(0.1, -0.05));
        let cfg = TrainingConfig::new(5.0, 3).unwrap();
        let ch = realization(g);
        let s1 = instantaneous_sinr(&estimate_of(noisy.clone()), &ch, &cfg, 2).unwrap();
        let s2 =
            instantaneous_sinr(&estimate_of(noisy * Complex64::from(7.5)), &ch, &cfg, 2).unwrap();
        assert_relative_eq!(s1, s2, max_relative = 1e-12);
    }

    #[test]
    fn zero_estimate_is_degenerate() {
        let est = estimate_of(DMatrix::zeros(3, 2));
        assert_eq!(combiner(&est, 1), Err(Error::DegenerateChannel { user: 1 }));
    }

    #[test]
    fn single_pure_los_user_gets_array_gain() {
        let drop =
            UserDrop::new(vec![UserLocation::new(1000.0, 0.7, f64::INFINITY).unwrap()]).unwrap();
        let cell = CellConfig::default().with_antennas(24);
        let ch = LosComponent::new(&drop, &cell).draw(&mut ChaCha8Rng::seed_from_u64(0));
        let cfg = TrainingConfig::new(3.0, 1).unwrap();
        let s = instantaneous_sinr(&estimate_of(ch.full()), &ch, &cfg, 0).unwrap();
        assert_relative_eq!(s, 3.0 * 24.0, max_relative = 1e-12);
    }

    #[test]
    fn orthogonal_channels_do_not_interfere() {
        let mut g = DMatrix::zeros(4, 2);
        g[(0, 0)] = Complex64::new(2.0, 0.0);
        g[(1, 1)] = Complex64::new(0.0, 1.0);
        let cfg = TrainingConfig::new(1.0, 2).unwrap();
        let ch = realization(g.clone());
        let s = instantaneous_sinr(&estimate_of(g), &ch, &cfg, 0).unwrap();
        // own gain 1, noise ||a||^2 = 1/4
        assert_relative_eq!(s, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn vanishing_power_vanishing_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = DMatrix::from_fn(5, 3, |_, _| crate::geometry::complex_gaussian(&mut rng));
        let ch = realization(g.clone());
        let cfg = TrainingConfig::new(1e-12, 3).unwrap();
        assert!(instantaneous_sinr(&estimate_of(g), &ch, &cfg, 0).unwrap() < 1e-9);
    }

    #[test]
    fn batch_sinr_matches_single_user_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = DMatrix::from_fn(8, 4, |_, _| crate::geometry::complex_gaussian(&mut rng));
        let ghat = g.map(|z| z * Complex64::new(0.9, 0.1));
        let cfg = TrainingConfig::new(4.0, 2).unwrap();
        let est = estimate_of(ghat);
        let ch = realization(g.clone());
        let a = combiner_matrix(&est, Detector::NormalizedMatched).unwrap();
        let batch = sinr_all(&a, &g, 4.0);
        for (n, s) in batch.iter().enumerate() {
            assert_relative_eq!(
                *s,
                instantaneous_sinr(&est, &ch, &cfg, n).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn zero_forcing_nulls_perfectly_known_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let g = DMatrix::from_fn(8, 3, |_, _| crate::geometry::complex_gaussian(&mut rng));
        let a = combiner_matrix(&estimate_of(g.clone()), Detector::ZeroForcing).unwrap();
        let cross = a.adjoint() * &g;
        assert!((cross - DMatrix::identity(3, 3)).camax() < 1e-12);
    }

    #[test]
    fn prefactor_applied_once() {
        let rates = [1.0, 2.0, 3.0];
        assert_relative_eq!(sum_rate(&rates, 196, 10), 186.0 / 196.0 * 6.0);
        let doubled: Vec<f64> = rates.iter().map(|r| 2.0 * r).collect();
        assert_relative_eq!(sum_rate(&doubled, 196, 10), 2.0 * sum_rate(&rates, 196, 10));
        assert_eq!(sum_rate(&rates, 10, 10), 0.0);
    }

    fn symmetric_pair() -> UserDrop {
        UserDrop::new(vec![
            UserLocation::new(400.0, 0.6, 3.0).unwrap(),
            UserLocation::new(400.0, -0.6, 3.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn whole_interval_of_training_means_zero_rate() {
        let drop = symmetric_pair();
        let a = PilotAssignment::from_groups(1, vec![vec![0, 1]], 2).unwrap();
        let cell = CellConfig::default().with_antennas(8);
        let cfg = TrainingConfig::new(10.0, 1).unwrap();
        let r = ergodic_rates(
            &drop,
            &a,
            &cell,
            &cfg,
            &LinkConfig::new(1),
            5,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(r.sum_rate, 0.0);
        assert!(r.per_user_rate.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn symmetric_users_get_equal_rates() {
        let drop = symmetric_pair();
        let a = PilotAssignment::from_groups(1, vec![vec![0, 1]], 2).unwrap();
        let cell = CellConfig::default().with_antennas(16);
        let cfg = TrainingConfig::new(10.0, 1).unwrap();
        let r = ergodic_rates(
            &drop,
            &a,
            &cell,
            &cfg,
            &LinkConfig::new(196),
            4000,
            &mut ChaCha8Rng::seed_from_u64(17),
        )
        .unwrap();
        let diff = (r.per_user_rate[0] - r.per_user_rate[1]).abs();
        let se = (r.per_user_stderr[0].powi(2) + r.per_user_stderr[1].powi(2)).sqrt();
        assert!(diff < 3.0 * se, "diff {diff} se {se}");
    }

    #[test]
    fn orthogonal_noise_free_pilots_beat_shared_pilots() {
        let drop = UserDrop::new(vec![
            UserLocation::new(200.0, 0.3, 3.0).unwrap(),
            UserLocation::new(500.0, 1.3 + PI, 3.0).unwrap(),
            UserLocation::new(650.0, 2.1, 3.0).unwrap(),
            UserLocation::new(900.0, 4.4, 3.0).unwrap(),
        ])
        .unwrap();
        let cell = CellConfig::default().with_antennas(32);
        let link = LinkConfig::new(196);
        let ortho = PilotAssignment::orthogonal(4);
        let shared = PilotAssignment::from_groups(2, vec![vec![0, 2], vec![1, 3]], 4).unwrap();
        let trials = 2000;
        let a = ergodic_rates(
            &drop,
            &ortho,
            &cell,
            &TrainingConfig::new(10.0, 4).unwrap().noise_free(),
            &link,
            trials,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let b = ergodic_rates(
            &drop,
            &shared,
            &cell,
            &TrainingConfig::new(10.0, 2).unwrap(),
            &link,
            trials,
            &mut ChaCha8Rng::seed_from_u64(6),
        )
        .unwrap();
        let sa: f64 = a.per_user_rate.iter().sum();
        let sb: f64 = b.per_user_rate.iter().sum();
        let se = a
            .per_user_stderr
            .iter()
            .chain(&b.per_user_stderr)
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
        assert!(sa + 3.0 * se >= sb, "ortho {sa} shared {sb} se {se}");
        assert!(sa > sb);
    }

    #[test]
    fn rejects_bad_inputs() {
        let drop = symmetric_pair();
        let a = PilotAssignment::orthogonal(2);
        let cell = CellConfig::default().with_antennas(4);
        let cfg = TrainingConfig::new(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ergodic_rates(&drop, &a, &cell, &cfg, &LinkConfig::new(10), 0, &mut rng).is_err());
        assert!(ergodic_rates(&drop, &a, &cell, &cfg, &LinkConfig::new(1), 3, &mut rng).is_err());
    }
}
