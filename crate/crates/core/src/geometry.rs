//! User geometry, large-scale fading and Rician channel synthesis.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location and Rician K-factor of one user.
///
/// `r` is the distance to the base station in meters, `theta` the angle of
/// arrival in radians (normalized into `[0, 2pi)`), `k_factor` is linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLocation {
    pub r: f64,
    pub theta: f64,
    pub k_factor: f64,
}

impl UserLocation {
    pub fn new(r: f64, theta: f64, k_factor: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(
                "r",
                format!("distance must be positive and finite, got {r}"),
            ));
        }
        if !theta.is_finite() {
            return Err(Error::invalid(
                "theta",
                format!("angle must be finite, got {theta}"),
            ));
        }
        // k = +inf is allowed and means a pure LOS channel.
        if k_factor.is_nan() || k_factor < 0.0 {
            return Err(Error::invalid(
                "k_factor",
                format!("K-factor must be non-negative (linear), got {k_factor}"),
            ));
        }
        let mut theta = theta.rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        Ok(UserLocation { r, theta, k_factor })
    }

    /// `K / (K + 1)`, the LOS power fraction. Equals 1 for `K = inf`.
    pub fn los_fraction(&self) -> f64 {
        if self.k_factor.is_infinite() {
            1.0
        } else {
            self.k_factor / (self.k_factor + 1.0)
        }
    }

    /// `1 / (K + 1)`, the NLOS power fraction.
    pub fn nlos_fraction(&self) -> f64 {
        1.0 / (self.k_factor + 1.0)
    }
}

/// An ordered set of users. Position in the list is the user's identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDrop", into = "RawDrop")]
pub struct UserDrop {
    users: Vec<UserLocation>,
}

#[derive(Serialize, Deserialize)]
struct RawDrop {
    users: Vec<UserLocation>,
}

impl TryFrom<RawDrop> for UserDrop {
    type Error = Error;

    fn try_from(raw: RawDrop) -> Result<Self> {
        UserDrop::new(raw.users)
    }
}

impl From<UserDrop> for RawDrop {
    fn from(d: UserDrop) -> Self {
        RawDrop { users: d.users }
    }
}

impl UserDrop {
    /// Validates every user; error fields are reported as `users[<1-based>].<field>`.
    pub fn new(users: Vec<UserLocation>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::invalid("users", "a drop needs at least one user"));
        }
        let mut out = Vec::with_capacity(users.len());
        for (idx, u) in users.into_iter().enumerate() {
            let checked = UserLocation::new(u.r, u.theta, u.k_factor).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                    field: format!("users[{}].{field}", idx + 1),
                    reason,
                },
                other => other,
            })?;
            out.push(checked);
        }
        Ok(UserDrop { users: out })
    }

    pub fn users(&self) -> &[UserLocation] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Base-station and propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub m_antennas: usize,
    pub cell_radius_m: f64,
    pub pathloss_exponent: f64,
    /// Element spacing over carrier wavelength, `d / lambda`.
    pub antenna_spacing_ratio: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            m_antennas: 20,
            cell_radius_m: 1000.0,
            pathloss_exponent: 3.8,
            antenna_spacing_ratio: 0.5,
        }
    }
}

impl CellConfig {
    pub fn new(
        m_antennas: usize,
        cell_radius_m: f64,
        pathloss_exponent: f64,
        antenna_spacing_ratio: f64,
    ) -> Result<Self> {
        let cfg = CellConfig {
            m_antennas,
            cell_radius_m,
            pathloss_exponent,
            antenna_spacing_ratio,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_antennas(self, m_antennas: usize) -> Self {
        CellConfig { m_antennas, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_antennas == 0 {
            return Err(Error::invalid("m_antennas", "need at least one antenna"));
        }
        if !(self.cell_radius_m.is_finite() && self.cell_radius_m > 0.0) {
            return Err(Error::invalid("cell_radius_m", "must be positive"));
        }
        // A zero exponent is accepted as the degenerate flat-pathloss case.
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0) {
            return Err(Error::invalid("pathloss_exponent", "must be non-negative"));
        }
        if !(self.antenna_spacing_ratio.is_finite() && self.antenna_spacing_ratio > 0.0) {
            return Err(Error::invalid("antenna_spacing_ratio", "must be positive"));
        }
        Ok(())
    }

    /// Phase step between adjacent elements per unit `sin(theta)`: `2 pi d / lambda`.
    pub fn phase_scale(&self) -> f64 {
        2.0 * PI * self.antenna_spacing_ratio
    }
}

/// Large-scale gain `beta = (r / r_h)^(-v)`; unity at the cell edge.
pub fn pathloss(r: f64, config: &CellConfig) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(
            "r",
            format!("distance must be positive, got {r}"),
        ));
    }
    Ok((r / config.cell_radius_m).powf(-config.pathloss_exponent))
}

/// ULA response toward `theta`. Element `m` (0-based) is
/// `exp(-j m 2 pi (d/lambda) sin(theta))`.
pub fn los_steering(theta: f64, config: &CellConfig) -> DVector<Complex64> {
    let step = config.phase_scale() * theta.sin();
    DVector::from_iterator(
        config.m_antennas,
        (0..config.m_antennas).map(|m| Complex64::from_polar(1.0, -(m as f64) * step)),
    )
}

/// Pathloss of every user in the drop.
pub fn betas(drop: &UserDrop, config: &CellConfig) -> Vec<f64> {
    drop.users()
        .iter()
        .map(|u| pathloss(u.r, config).expect("drop distances are validated"))
        .collect()
}

/// The deterministic part of a drop's channel: the scaled LOS matrix and the
/// large-scale gains. Independent of fading, so it can be reused across draws.
#[derive(Debug, Clone, PartialEq)]
pub struct LosComponent {
    pub g_los: DMatrix<Complex64>,
    pub beta: Vec<f64>,
    /// `sqrt(beta_n / (K_n + 1))` per user, the NLOS amplitude.
    nlos_scale: Vec<f64>,
}

impl LosComponent {
    pub fn new(drop: &UserDrop, config: &CellConfig) -> Self {
        let beta = betas(drop, config);
        let m = config.m_antennas;
        let mut g_los = DMatrix::zeros(m, drop.len());
        for (n, u) in drop.users().iter().enumerate() {
            let amp = (beta[n] * u.los_fraction()).sqrt();
            if amp > 0.0 {
                let col = los_steering(u.theta, config) * Complex64::from(amp);
                g_los.set_column(n, &col);
            }
        }
        let nlos_scale = drop
            .users()
            .iter()
            .zip(&beta)
            .map(|(u, b)| (b * u.nlos_fraction()).sqrt())
            .collect();
        LosComponent {
            g_los,
            beta,
            nlos_scale,
        }
    }

    /// Draws a fresh NLOS part on top of this LOS component.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let (m, n) = self.g_los.shape();
        let mut g_nlos = DMatrix::zeros(m, n);
        for (col, scale) in self.nlos_scale.iter().enumerate() {
            for row in 0..m {
                g_nlos[(row, col)] = complex_gaussian(rng) * *scale;
            }
        }
        ChannelRealization {
            g_los: self.g_los.clone(),
            g_nlos,
            beta: self.beta.clone(),
        }
    }
}

/// One Rician channel draw, kept split into its LOS and NLOS parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub g_los: DMatrix<Complex64>,
    pub g_nlos: DMatrix<Complex64>,
    pub beta: Vec<f64>,
}

impl ChannelRealization {
    /// The full `M x N` channel `G = G_los + G_nlos`.
    pub fn full(&self) -> DMatrix<Complex64> {
        &self.g_los + &self.g_nlos
    }

    pub fn m_antennas(&self) -> usize {
        self.g_los.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.g_los.ncols()
    }
}

/// Circularly-symmetric `CN(0, 1)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn draw_channel<R: Rng + ?Sized>(
    drop: &UserDrop,
    config: &CellConfig,
    rng: &mut R,
) -> ChannelRealization {
    LosComponent::new(drop, config).draw(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(m: usize) -> CellConfig {
        CellConfig::default().with_antennas(m)
    }

    #[test]
    fn pathloss_is_one_at_cell_edge() {
        assert_eq!(pathloss(1000.0, &cell(4)).unwrap(), 1.0);
    }

    #[test]
    fn pathloss_at_tenth_of_radius() {
        // 10^3.8, evaluated independently: 6309.573444801932
        let b = pathloss(100.0, &cell(4)).unwrap();
        assert_relative_eq!(b, 6309.573444801932, max_relative = 1e-13);
    }

    #[test]
    fn pathloss_zero_exponent_is_flat() {
        let c = CellConfig {
            pathloss_exponent: 0.0,
            ..cell(4)
        };
        for r in [1.0, 37.0, 1000.0, 5e4] {
            assert_eq!(pathloss(r, &c).unwrap(), 1.0);
        }
    }

    #[test]
    fn pathloss_rejects_non_positive_distance() {
        assert!(pathloss(0.0, &cell(4)).is_err());
        assert!(pathloss(-3.0, &cell(4)).is_err());
        assert!(pathloss(f64::NAN, &cell(4)).is_err());
    }

    #[test]
    fn pathloss_decreasing() {
        let c = cell(4);
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let b = pathloss(k as f64 * 10.0, &c).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        for m in [1, 5, 64] {
            let a = los_steering(0.0, &cell(m));
            assert!(a.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
            let b = los_steering(PI, &cell(m));
            for z in b.iter() {
                assert_relative_eq!(z.re, 1.0, epsilon = 1e-12);
                assert!(z.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let a = los_steering(PI / 2.0, &cell(4));
        let expected = [1.0, -1.0, 1.0, -1.0];
        for (z, e) in a.iter().zip(expected) {
            assert!((z.re - e).abs() < 1e-12 && z.im.abs() < 1e-12, "{z}");
        }
    }

    #[test]
    fn steering_norm_is_m() {
        for m in [1, 7, 128] {
            for k in 0..50 {
                let theta = k as f64 * 0.1234;
                let a = los_steering(theta, &cell(m));
                assert_relative_eq!(a.norm_squared(), m as f64, max_relative = 1e-12);
                assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn user_validation() {
        assert!(UserLocation::new(0.0, 0.0, 1.0).is_err());
        assert!(UserLocation::new(10.0, f64::NAN, 1.0).is_err());
        assert!(UserLocation::new(10.0, 0.0, -0.5).is_err());
        let u = UserLocation::new(10.0, -PI / 2.0, 0.0).unwrap();
        assert_relative_eq!(u.theta, 1.5 * PI);
        assert!(UserDrop::new(vec![]).is_err());
    }

    #[test]
    fn drop_error_names_the_field() {
        let err = UserDrop::new(vec![
            UserLocation {
                r: 10.0,
                theta: 0.0,
                k_factor: 1.0,
            },
            UserLocation {
                r: -1.0,
                theta: 0.0,
                k_factor: 1.0,
            },
        ])
        .unwrap_err();
        assert!(err.to_string().contains("users[2].r"), "{err}");
    }

    #[test]
    fn channel_columns_have_the_right_weights() {
        let drop = UserDrop::new(vec![
            UserLocation::new(300.0, 0.3, 3.0).unwrap(),
            UserLocation::new(900.0, 2.0, 0.0).unwrap(),
            UserLocation::new(150.0, 5.0, 1e12).unwrap(),
        ])
        .unwrap();
        let c = cell(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_channel(&drop, &c, &mut rng);
        for (n, u) in drop.users().iter().enumerate() {
            let expected = 16.0 * ch.beta[n] * u.los_fraction();
            assert_relative_eq!(
                ch.g_los.column(n).norm_squared(),
                expected,
                max_relative = 1e-12,
                epsilon = 1e-300
            );
        }
        // K = 0 has no LOS part
        assert!(ch
            .g_los
            .column(1)
            .iter()
            .all(|z| *z == Complex64::new(0.0, 0.0)));
        // K = 1e12 is essentially pure LOS
        let nlos = ch.g_nlos.column(2).norm_squared();
        assert!(nlos / (16.0 * ch.beta[2]) < 1e-9);
        // reconstruction
        let g = ch.full();
        let los = los_steering(drop.users()[0].theta, &c);
        for m in 0..16 {
            let direct = los[m] * (ch.beta[0] * 0.75).sqrt() + ch.g_nlos[(m, 0)];
            assert_eq!(g[(m, 0)], direct);
        }
    }

    #[test]
    fn nlos_power_matches_beta_over_k_plus_one() {
        let drop = UserDrop::new(vec![UserLocation::new(500.0, 1.0, 3.0).unwrap()]).unwrap();
        let c = cell(8);
        let los = LosComponent::new(&drop, &c);
        let target = los.beta[0] / 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let samples: Vec<f64> = (0..draws)
            .map(|_| los.draw(&mut rng).g_nlos.column(0).norm_squared() / 8.0)
            .collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - target).abs() < 3.0 * se,
            "mean {mean} target {target} se {se}"
        );
        assert!((mean - target).abs() / target < 0.05);
    }
}
