//! Gaussian field machinery: covariance families, the circulant-embedding
//! square root of the spatial covariance, the whitened transformation and the
//! autoregressive temporal prior.

mod ar;
mod fft;
mod spectral;

pub use ar::{ar_coefficient, ar_prior_logdensity, ArPrior};
pub use fft::Fft2;
pub use spectral::{SliceTransform, SpectralOperator, MAX_TRUNCATED_FRACTION};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters of the separable space-time covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    /// Marginal standard deviation of the log-intensity field.
    pub sigma: f64,
    /// Spatial range, in map units.
    pub phi: f64,
    /// Temporal decay rate, per time unit.
    pub theta: f64,
}

impl CovarianceParams {
    pub fn new(sigma: f64, phi: f64, theta: f64) -> Result<Self> {
        let p = CovarianceParams { sigma, phi, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidCovariance(format!(
                "sigma = {} must be positive",
                self.sigma
            )));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidCovariance(format!(
                "phi = {} must be positive",
                self.phi
            )));
        }
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err(Error::InvalidCovariance(format!(
                "theta = {} must be non-negative",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Stationary isotropic correlation family.
pub trait CorrelationFamily: Send + Sync + std::fmt::Debug {
    fn correlation(&self, d: f64, phi: f64) -> f64;
    /// Derivative of the correlation with respect to `ln phi`.
    fn d_correlation_d_log_phi(&self, d: f64, phi: f64) -> f64;
}

/// `exp(-d / phi)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Exponential;

impl CorrelationFamily for Exponential {
    fn correlation(&self, d: f64, phi: f64) -> f64 {
        (-d / phi).exp()
    }

    fn d_correlation_d_log_phi(&self, d: f64, phi: f64) -> f64 {
        (-d / phi).exp() * d / phi
    }
}

/// Exponential covariance `sigma^2 exp(-d / phi)`.
pub fn exp_cov(d: f64, params: &CovarianceParams) -> f64 {
    params.sigma * params.sigma * Exponential.correlation(d, params.phi)
}
