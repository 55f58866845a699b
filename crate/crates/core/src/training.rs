//! Uplink training and least-squares estimation of the NLOS channel.
//!
//! The LOS part of every channel is known from user locations, so it is
//! subtracted from the received pilots before correlating with the pilot
//! matrix. Users sharing a pilot end up with the sum of their NLOS channels
//! in each other's estimates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{complex_gaussian, ChannelRealization};
use crate::pilots::PilotMatrix;

/// Training powers. Receiver noise has unit variance, so `p_u` is a linear SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    p_u: f64,
    tau: usize,
    noise_free: bool,
}

impl TrainingConfig {
    pub fn new(p_u: f64, tau: usize) -> Result<Self> {
        if !(p_u.is_finite() && p_u > 0.0) {
            return Err(Error::invalid(
                "p_u",
                format!("uplink power must be positive, got {p_u}"),
            ));
        }
        if tau == 0 {
            return Err(Error::invalid("tau", "need at least one pilot"));
        }
        Ok(TrainingConfig {
            p_u,
            tau,
            noise_free: false,
        })
    }

    /// Same powers with the training noise switched off.
    pub fn noise_free(self) -> Self {
        TrainingConfig {
            noise_free: true,
            ..self
        }
    }

    pub fn is_noise_free(&self) -> bool {
        self.noise_free
    }

    pub fn p_u(&self) -> f64 {
        self.p_u
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Pilot power `p_p = tau * p_u`.
    pub fn p_p(&self) -> f64 {
        self.tau as f64 * self.p_u
    }
}

/// Channel estimate `G_hat = G_los + G_hat_nlos`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub g_hat: DMatrix<Complex64>,
    pub g_hat_nlos: DMatrix<Complex64>,
}

impl ChannelEstimate {
    pub fn n_users(&self) -> usize {
        self.g_hat.ncols()
    }
}

fn check_pilots(n_users: usize, pilots: &PilotMatrix, cfg: &TrainingConfig) -> Result<()> {
    if pilots.n_users() != n_users {
        return Err(Error::DimensionMismatch(format!(
            "pilot matrix covers {} users, channel has {n_users}",
            pilots.n_users()
        )));
    }
    if pilots.tau() != cfg.tau() {
        return Err(Error::DimensionMismatch(format!(
            "pilot length {} differs from training tau {}",
            pilots.tau(),
            cfg.tau()
        )));
    }
    Ok(())
}

fn complex_phi(pilots: &PilotMatrix) -> DMatrix<Complex64> {
    pilots.phi().map(Complex64::from)
}

/// Received pilot block `Y = sqrt(p_p) G Phi^T + W`, `M x tau`.
///
/// With `cfg.noise_free()` the noise term is omitted and `rng` is not used.
pub fn received_training<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    pilots: &PilotMatrix,
    cfg: &TrainingConfig,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    check_pilots(chan.n_users(), pilots, cfg)?;
    let phi_t = complex_phi(pilots).transpose();
    let mut y = chan.full() * phi_t * Complex64::from(cfg.p_p().sqrt());
    if !cfg.is_noise_free() {
        for w in y.iter_mut() {
            *w += complex_gaussian(rng);
        }
    }
    Ok(y)
}

/// LS estimate given the received block and the known LOS matrix.
pub fn ls_estimate(
    y: &DMatrix<Complex64>,
    g_los: &DMatrix<Complex64>,
    pilots: &PilotMatrix,
    cfg: &TrainingConfig,
) -> Result<ChannelEstimate> {
    check_pilots(g_los.ncols(), pilots, cfg)?;
    if y.shape() != (g_los.nrows(), cfg.tau()) {
        return Err(Error::DimensionMismatch(format!(
            "received block is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            g_los.nrows(),
            cfg.tau()
        )));
    }
    let phi = complex_phi(pilots);
    let sqrt_pp = Complex64::from(cfg.p_p().sqrt());
    let y_nlos = y - g_los * phi.transpose() * sqrt_pp;
    let g_hat_nlos = y_nlos * phi / sqrt_pp;
    Ok(ChannelEstimate {
        g_hat: g_los + &g_hat_nlos,
        g_hat_nlos,
    })
}
