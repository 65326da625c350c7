use crate::error::{Error, Result};
use crate::field::{ar_coefficient, CovarianceParams, SpectralOperator};
use crate::geometry::{Grid, Point};
use crate::inference::ModelSpec;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

/// Generating parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    /// Intercept first, then one coefficient per covariate.
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub phi: f64,
    pub theta: f64,
}

impl TrueParams {
    pub fn covariance(&self) -> Result<CovarianceParams> {
        CovarianceParams::new(self.sigma, self.phi, self.theta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgcpDraw {
    /// Whitened slices on the extended grid, slice-major.
    pub gamma: Vec<f64>,
    /// `Y_t` per slice.
    pub y: Vec<Vec<f64>>,
    /// `N_t` per slice.
    pub n: Vec<Vec<u64>>,
    /// Event locations per slice.
    pub points: Vec<Vec<Point>>,
}

/// Standard-normal whitened slices following the autoregressive prior.
pub fn draw_whitened(grid: &Grid, theta: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let n_ext = grid.n_extended();
    let gaps = grid.time_gaps();
    if !gaps.is_empty() && (theta.is_nan() || theta <= 0.0) {
        return Err(Error::DegenerateAr(
            "theta must be positive with several time slices".into(),
        ));
    }
    let mut gamma: Vec<f64> = (0..n_ext).map(|_| rng.sample(StandardNormal)).collect();
    for (t, &delta) in gaps.iter().enumerate() {
        let a = ar_coefficient(theta, delta);
        let s = (-(-2.0 * theta * delta).exp_m1()).sqrt();
        for k in 0..n_ext {
            let z: f64 = rng.sample(StandardNormal);
            let prev = gamma[t * n_ext + k];
            gamma.push(a * prev + s * z);
        }
    }
    Ok(gamma)
}

/// Uniform point in cell `j`.
pub fn scatter_in_cell(grid: &Grid, j: usize, rng: &mut dyn RngCore) -> Point {
    let r = grid.cell_rect(j);
    Point::new(
        r.min_x + r.width() * rng.random::<f64>(),
        r.min_y + r.height() * rng.random::<f64>(),
    )
}

/// Draws `Γ` from its prior, transforms to `Y`, draws
/// `N_tj ~ Poisson(C_A λ_tj exp(Z_tj β + Y_tj))` and scatters the events
/// uniformly within their cells.
pub fn simulate_lgcp(
    spec: &ModelSpec,
    params: &TrueParams,
    rng: &mut dyn RngCore,
) -> Result<LgcpDraw> {
    params.covariance()?;
    if params.beta.len() != spec.n_beta() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a model with {}",
            params.beta.len(),
            spec.n_beta()
        )));
    }
    let grid = &spec.grid;
    let op = SpectralOperator::new(grid, params.phi)?;
    let gamma = draw_whitened(grid, params.theta, rng)?;
    let n_ext = grid.n_extended();
    let mut ys = Vec::new();
    let mut ns = Vec::new();
    let mut pts = Vec::new();
    for t in 0..spec.n_times() {
        let y = op.transform(&gamma[t * n_ext..(t + 1) * n_ext], params.sigma)?;
        let zb = spec.linear_predictor(t, &params.beta);
        let mut n = Vec::with_capacity(y.len());
        let mut points = Vec::new();
        for j in 0..y.len() {
            let mu = spec.cell_area() * spec.offset(t, j) * (zb[j] + y[j]).exp();
            let c = if mu > 0.0 {
                Poisson::new(mu)
                    .map_err(|_| Error::NonFinite { cell: j, time: t })?
                    .sample(rng) as u64
            } else {
                0
            };
            for _ in 0..c {
                points.push(scatter_in_cell(grid, j, rng));
            }
            n.push(c);
        }
        ys.push(y);
        ns.push(n);
        pts.push(points);
    }
    Ok(LgcpDraw {
        gamma,
        y: ys,
        n: ns,
        points: pts,
    })
}
