use super::fft::Fft2;
use super::{CorrelationFamily, Exponential};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use rustfft::num_complex::Complex64;
use std::sync::Arc;

/// Largest share of spectral mass that may be lost to negative eigenvalues.
pub const MAX_TRUNCATED_FRACTION: f64 = 0.01;

/// Square root of the spatial covariance, represented by the eigenvalues of
/// its block-circulant embedding on the extended torus.
///
/// Products with the square root (and its transpose, which is the same
/// operator because the embedding is symmetric) cost two FFTs of the
/// extended grid; storage is linear in the number of extended cells.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    nx: usize,
    ny: usize,
    ex: usize,
    ey: usize,
    phi: f64,
    /// Square-rooted unit-variance eigenvalues, pre-divided by the number of extended cells.
    sqrt_eig: Vec<f64>,
    /// Derivative of `sqrt_eig` with respect to `ln phi`, same normalisation.
    d_sqrt_eig: Vec<f64>,
    raw_eig: Vec<f64>,
    truncated: usize,
    truncated_fraction: f64,
    fft: Arc<Fft2>,
}

/// Result of pushing one whitened slice through the operator.
#[derive(Clone, Debug)]
pub struct SliceTransform {
    /// `-sigma^2/2 + sigma * C^{1/2} gamma` on the observation cells.
    pub y: Vec<f64>,
    /// `C^{1/2} gamma` (unit variance) on the observation cells.
    pub unit: Vec<f64>,
    /// Derivative of `y` with respect to `ln phi`.
    pub dy_dlog_phi: Vec<f64>,
}

impl SpectralOperator {
    pub fn new(grid: &Grid, phi: f64) -> Result<Self> {
        Self::build(grid, phi, &Exponential, None)
    }

    /// Builds the operator, reusing an FFT plan of the extended grid when given.
    pub fn build(
        grid: &Grid,
        phi: f64,
        family: &dyn CorrelationFamily,
        fft: Option<Arc<Fft2>>,
    ) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidCovariance(format!(
                "phi = {phi} must be positive"
            )));
        }
        let (ex, ey) = grid.extended_dims();
        let n = ex * ey;
        let fft = match fft {
            Some(f) if f.len() == n => f,
            _ => Arc::new(Fft2::new(ex, ey)),
        };
        let mut base = vec![Complex64::default(); n];
        for r in 0..ey {
            let dyc = r.min(ey - r) as f64 * grid.dy;
            for c in 0..ex {
                let dxc = c.min(ex - c) as f64 * grid.dx;
                let d = dxc.hypot(dyc);
                base[r * ex + c] = Complex64::new(
                    family.correlation(d, phi),
                    family.d_correlation_d_log_phi(d, phi),
                );
            }
        }
        // both base rows are real and even, so their spectra are real: one
        // complex transform yields both
        fft.forward(&mut base);
        let raw_eig: Vec<f64> = base.iter().map(|z| z.re).collect();
        let d_eig: Vec<f64> = base.iter().map(|z| z.im).collect();

        let total: f64 = raw_eig.iter().map(|v| v.abs()).sum();
        let lost: f64 = raw_eig.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        let truncated = raw_eig.iter().filter(|v| **v < 0.0).count();
        let truncated_fraction = if total > 0.0 { lost / total } else { 1.0 };
        if truncated_fraction > MAX_TRUNCATED_FRACTION {
            return Err(Error::SpectralTruncation {
                fraction: truncated_fraction,
                count: truncated,
            });
        }
        let norm = 1.0 / n as f64;
        let mut sqrt_eig = Vec::with_capacity(n);
        let mut d_sqrt_eig = Vec::with_capacity(n);
        for (&lam, &dlam) in raw_eig.iter().zip(&d_eig) {
            if lam > 0.0 {
                let s = lam.sqrt();
                sqrt_eig.push(s * norm);
                d_sqrt_eig.push(0.5 * dlam / s * norm);
            } else {
                sqrt_eig.push(0.0);
                d_sqrt_eig.push(0.0);
            }
        }
        Ok(SpectralOperator {
            nx: grid.nx,
            ny: grid.ny,
            ex,
            ey,
            phi,
            sqrt_eig,
            d_sqrt_eig,
            raw_eig,
            truncated,
            truncated_fraction,
            fft,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn n_extended(&self) -> usize {
        self.ex * self.ey
    }

    pub fn n_observed(&self) -> usize {
        self.nx * self.ny
    }

    pub fn fft(&self) -> Arc<Fft2> {
        Arc::clone(&self.fft)
    }

    /// Number of negative eigenvalues set to zero.
    pub fn truncated_count(&self) -> usize {
        self.truncated
    }

    pub fn truncated_fraction(&self) -> f64 {
        self.truncated_fraction
    }

    /// Eigenvalues of the embedded covariance `sigma^2 * C` after truncation.
    pub fn eigenvalues(&self, sigma: f64) -> Vec<f64> {
        self.raw_eig
            .iter()
            .map(|v| sigma * sigma * v.max(0.0))
            .collect()
    }

    fn obs_index(&self, j: usize) -> usize {
        (j / self.nx) * self.ex + j % self.nx
    }

    fn check_ext(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_extended() {
            return Err(Error::DimensionMismatch(format!(
                "whitened field has {} entries, extended grid has {}",
                v.len(),
                self.n_extended()
            )));
        }
        Ok(())
    }

    /// `C^{1/2} v` on the full extended grid (unit variance).
    pub fn apply_sqrt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_ext(v)?;
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut buf);
        for (z, s) in buf.iter_mut().zip(&self.sqrt_eig) {
            *z *= *s;
        }
        self.fft.inverse(&mut buf);
        Ok(buf.iter().map(|z| z.re).collect())
    }

    /// `Y = -sigma^2/2 + sigma * C^{1/2} gamma`, restricted to the observation cells.
    pub fn transform(&self, gamma: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let full = self.apply_sqrt(gamma)?;
        let offset = -0.5 * sigma * sigma;
        Ok((0..self.n_observed())
            .map(|j| offset + sigma * full[self.obs_index(j)])
            .collect())
    }

    /// Transform plus the derivative with respect to `ln phi`, sharing one
    /// forward and one inverse FFT.
    pub fn transform_slice(&self, gamma: &[f64], sigma: f64) -> Result<SliceTransform> {
        self.check_ext(gamma)?;
        let mut buf: Vec<Complex64> = gamma.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut buf);
        for ((z, s), ds) in buf.iter_mut().zip(&self.sqrt_eig).zip(&self.d_sqrt_eig) {
            // real part -> C^{1/2} gamma, imaginary part -> its phi derivative
            *z *= Complex64::new(*s, *ds);
        }
        self.fft.inverse(&mut buf);
        let offset = -0.5 * sigma * sigma;
        let n = self.n_observed();
        let mut y = Vec::with_capacity(n);
        let mut unit = Vec::with_capacity(n);
        let mut dy = Vec::with_capacity(n);
        for j in 0..n {
            let z = buf[self.obs_index(j)];
            unit.push(z.re);
            y.push(offset + sigma * z.re);
            dy.push(sigma * z.im);
        }
        Ok(SliceTransform {
            y,
            unit,
            dy_dlog_phi: dy,
        })
    }

    /// Adjoint of the restricted operator: `sigma * C^{1/2} P^T g`, where `P`
    /// picks the observation cells out of the extended grid.
    pub fn pullback(&self, g_obs: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if g_obs.len() != self.n_observed() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} entries, grid has {}",
                g_obs.len(),
                self.n_observed()
            )));
        }
        let mut padded = vec![0.0; self.n_extended()];
        for (j, g) in g_obs.iter().enumerate() {
            padded[self.obs_index(j)] = *g;
        }
        let mut out = self.apply_sqrt(&padded)?;
        out.iter_mut().for_each(|v| *v *= sigma);
        Ok(out)
    }

    /// Covariance between observation cells implied by the (possibly truncated) operator.
    pub fn implied_covariance(&self, sigma: f64, a: usize, b: usize) -> f64 {
        let n = self.n_extended();
        let mut e = vec![0.0; n];
        e[self.obs_index(a)] = 1.0;
        let col = self.apply_sqrt(&e).expect("sized");
        let mut f = vec![0.0; n];
        f[self.obs_index(b)] = 1.0;
        let row = self.apply_sqrt(&f).expect("sized");
        sigma * sigma * col.iter().zip(&row).map(|(x, y)| x * y).sum::<f64>()
    }
}
