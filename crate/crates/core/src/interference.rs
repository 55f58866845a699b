//! Closed-form LOS interference between users that share a pilot.
//!
//! For two users `n`, `i` the LOS inner product of their channels is a
//! Dirichlet kernel in the phase difference
//! `d_theta = 2 pi (d/lambda) (sin theta_n - sin theta_i)`:
//!
//! ```text
//! (g_n^LOS)^H g_i^LOS = Omega_ni * sin(M d_theta / 2) / sin(d_theta / 2) * exp(j d_theta (M - 1) / 2)
//! Omega_ni            = sqrt(beta_n beta_i K_n K_i / ((K_n + 1)(K_i + 1)))
//! ```
//!
//! Normalizing by the large-`M` limit of `|g_hat_n|^2 / M`,
//!
//! ```text
//! D_n = beta_n + sum_{j in group, j != n} beta_j / (1 + K_j) + 1 / p_p
//! ```
//!
//! gives the interference measure `|I_ni|^2 = Omega^2 kernel^2 / (M^2 D_n^2)`.
//! Everything here depends only on user locations and K-factors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{betas, CellConfig, UserDrop, UserLocation};
use crate::pilots::{validate, PilotAssignment};
use crate::training::TrainingConfig;

/// Below this `|sin(d_theta / 2)|` the kernel is evaluated by its Taylor
/// expansion around the nearest multiple of `2 pi`.
pub const KERNEL_SINGULARITY_THRESHOLD: f64 = 1e-8;

/// `sin(M x / 2) / sin(x / 2)`, continuous through the removable
/// singularities at `x = 2 pi k`.
pub fn dirichlet_ratio(d_theta: f64, m_antennas: usize) -> f64 {
    let m = m_antennas as f64;
    let half = 0.5 * d_theta;
    let s = half.sin();
    if s.abs() >= KERNEL_SINGULARITY_THRESHOLD {
        return (m * half).sin() / s;
    }
    let k = (d_theta / std::f64::consts::TAU).round();
    let eps = d_theta - k * std::f64::consts::TAU;
    // (-1)^((M-1) k) * M * (1 - (M^2 - 1) eps^2 / 24)
    let odd = (k as i64).rem_euclid(2) == 1 && m_antennas.is_multiple_of(2);
    let sign = if odd { -1.0 } else { 1.0 };
    sign * m * (1.0 - (m * m - 1.0) * eps * eps / 24.0)
}

/// `Omega^2 kernel^2 / (M^2 denominator^2)`.
pub fn pair_measure(omega: f64, d_theta: f64, m_antennas: usize, denominator: f64) -> f64 {
    let m = m_antennas as f64;
    let k = dirichlet_ratio(d_theta, m_antennas);
    (omega * k / (m * denominator)).powi(2)
}

/// `|I_ni|^2` against `d_theta` for two users with `beta = K = p_p = 1`
/// sharing one pilot (`Omega = 1/2`, `D = 5/2`), at `steps + 1` evenly spaced
/// points of `[-pi, pi]`. With `steps` a multiple of `M` the grid hits every
/// kernel null.
pub fn unit_kernel_sweep(m_antennas: usize, steps: usize) -> Vec<(f64, f64)> {
    use std::f64::consts::PI;
    (0..=steps)
        .map(|j| {
            let d_theta = -PI + 2.0 * PI * j as f64 / steps as f64;
            (d_theta, pair_measure(0.5, d_theta, m_antennas, 2.5))
        })
        .collect()
}

/// Per-user quantities the closed forms need, precomputed for a drop.
#[derive(Debug, Clone, PartialEq)]
pub struct LosGeometry {
    beta: Vec<f64>,
    sin_theta: Vec<f64>,
    los_fraction: Vec<f64>,
    nlos_fraction: Vec<f64>,
    m_antennas: usize,
    phase_scale: f64,
    inv_pilot_power: f64,
}

impl LosGeometry {
    pub fn new(drop: &UserDrop, cell: &CellConfig, cfg: &TrainingConfig) -> Self {
        let users = drop.users();
        LosGeometry {
            beta: betas(drop, cell),
            sin_theta: users.iter().map(|u| u.theta.sin()).collect(),
            los_fraction: users.iter().map(UserLocation::los_fraction).collect(),
            nlos_fraction: users.iter().map(UserLocation::nlos_fraction).collect(),
            m_antennas: cell.m_antennas,
            phase_scale: cell.phase_scale(),
            inv_pilot_power: 1.0 / cfg.p_p(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.beta.len()
    }

    pub fn m_antennas(&self) -> usize {
        self.m_antennas
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.beta[n]
    }

    pub fn omega(&self, n: usize, i: usize) -> f64 {
        (self.beta[n] * self.beta[i] * self.los_fraction[n] * self.los_fraction[i]).sqrt()
    }

    pub fn d_theta(&self, n: usize, i: usize) -> f64 {
        self.phase_scale * (self.sin_theta[n] - self.sin_theta[i])
    }

    pub fn cross_product(&self, n: usize, i: usize) -> Complex64 {
        let dt = self.d_theta(n, i);
        let phase = dt * (self.m_antennas as f64 - 1.0) / 2.0;
        Complex64::from_polar(
            self.omega(n, i) * dirichlet_ratio(dt, self.m_antennas),
            phase,
        )
    }

    /// Large-`M` limit of `|g_hat_n|^2 / M` when `n` shares a pilot with `group`.
    /// `group` may or may not list `n` itself.
    pub fn denominator(&self, n: usize, group: &[usize]) -> f64 {
        let contamination: f64 = group
            .iter()
            .filter(|&&j| j != n)
            .map(|&j| self.beta[j] * self.nlos_fraction[j])
            .sum();
        self.beta[n] + contamination + self.inv_pilot_power
    }

    /// `|I_ni|^2` with `n`'s pilot group taken to be `group`.
    pub fn pair_value(&self, n: usize, i: usize, group: &[usize]) -> f64 {
        pair_measure(
            self.omega(n, i),
            self.d_theta(n, i),
            self.m_antennas,
            self.denominator(n, group),
        )
    }

    pub fn pairwise(&self, n: usize, i: usize, group: &[usize]) -> PairwiseInterference {
        PairwiseInterference {
            omega: self.omega(n, i),
            d_theta: self.d_theta(n, i),
            value: self.pair_value(n, i, group),
        }
    }

    /// `I_tot` without building the per-pair report.
    pub fn total(&self, assignment: &PilotAssignment, counting: PairCounting) -> f64 {
        let mut total = 0.0;
        for group in assignment.groups() {
            for (a, &n) in group.iter().enumerate() {
                for &i in &group[a + 1..] {
                    total += counting
                        .combine(self.pair_value(n, i, group), self.pair_value(i, n, group));
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseInterference {
    pub omega: f64,
    pub d_theta: f64,
    pub value: f64,
}

/// How same-pilot pairs enter `I_tot`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairCounting {
    /// Each unordered pair once, valued at the mean of `|I_ni|^2` and `|I_in|^2`.
    #[default]
    Unordered,
    /// Every ordered pair `(n, i)`, `n != i`.
    Ordered,
}

impl PairCounting {
    fn combine(self, forward: f64, backward: f64) -> f64 {
        match self {
            PairCounting::Unordered => 0.5 * (forward + backward),
            PairCounting::Ordered => forward + backward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    /// 1-based user labels.
    pub n: usize,
    pub i: usize,
    pub value: f64,
}

/// Per-pair LOS interference and the network total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceReport {
    pub pairs: Vec<PairTerm>,
    pub total: f64,
    /// `10 log10(total)`; absent when the total is zero.
    pub total_db: Option<f64>,
}

pub fn to_db(x: f64) -> Option<f64> {
    (x > 0.0).then(|| 10.0 * x.log10())
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Kernel as a function of the phase difference.
pub fn los_cross_product(
    user_n: &UserLocation,
    beta_n: f64,
    user_i: &UserLocation,
    beta_i: f64,
    cell: &CellConfig,
) -> Complex64 {
    let omega = (beta_n * beta_i * user_n.los_fraction() * user_i.los_fraction()).sqrt();
    let dt = cell.phase_scale() * (user_n.theta.sin() - user_i.theta.sin());
    let m = cell.m_antennas;
    Complex64::from_polar(omega * dirichlet_ratio(dt, m), dt * (m as f64 - 1.0) / 2.0)
}

/// `beta_n + sum_{j in group, j != n} beta_j / (1 + K_j) + 1 / p_p`.
///
/// `betas` and `k_factors` are indexed by user; `group` holds user indices.
pub fn asymptotic_denominator(
    user_n: usize,
    group: &[usize],
    betas: &[f64],
    k_factors: &[f64],
    cfg: &TrainingConfig,
) -> f64 {
    debug_assert!(group.contains(&user_n), "user must belong to the group");
    let contamination: f64 = group
        .iter()
        .filter(|&&j| j != user_n)
        .map(|&j| betas[j] / (1.0 + k_factors[j]))
        .sum();
    betas[user_n] + contamination + 1.0 / cfg.p_p()
}

/// `|I_ni|^2` for two users of `drop`, `n` belonging to `group_of_n`.
pub fn pairwise_interference(
    user_n: usize,
    user_i: usize,
    group_of_n: &[usize],
    drop: &UserDrop,
    cell: &CellConfig,
    cfg: &TrainingConfig,
) -> PairwiseInterference {
    LosGeometry::new(drop, cell, cfg).pairwise(user_n, user_i, group_of_n)
}

/// `I_tot` over all same-pilot pairs, with the per-pair breakdown.
pub fn total_interference(
    drop: &UserDrop,
    assignment: &PilotAssignment,
    cell: &CellConfig,
    cfg: &TrainingConfig,
    counting: PairCounting,
) -> Result<InterferenceReport> {
    let violations = validate(assignment, drop.len());
    if !violations.is_empty() {
        return Err(Error::InvalidAssignment(violations));
    }
    let geo = LosGeometry::new(drop, cell, cfg);
    let mut pairs = Vec::new();
    for group in assignment.groups() {
        for (a, &n) in group.iter().enumerate() {
            for &i in &group[a + 1..] {
                let fwd = geo.pair_value(n, i, group);
                let bwd = geo.pair_value(i, n, group);
                match counting {
                    PairCounting::Unordered => pairs.push(PairTerm {
                        n: n + 1,
                        i: i + 1,
                        value: counting.combine(fwd, bwd),
                    }),
                    PairCounting::Ordered => {
                        pairs.push(PairTerm {
                            n: n + 1,
                            i: i + 1,
                            value: fwd,
                        });
                        pairs.push(PairTerm {
                            n: i + 1,
                            i: n + 1,
                            value: bwd,
                        });
                    }
                }
            }
        }
    }
    let total = pairs.iter().map(|p| p.value).sum();
    Ok(InterferenceReport {
        pairs,
        total,
        total_db: to_db(total),
    })
}
