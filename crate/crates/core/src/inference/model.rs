use crate::error::{Error, Result};
use crate::geometry::Grid;
use serde::{Deserialize, Serialize};

/// Prior on one scalar parameter (log scale for covariance parameters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
}

impl Prior {
    pub fn is_fixed(&self) -> bool {
        matches!(self, Prior::Fixed { .. })
    }

    /// Prior mean, or the fixed value.
    pub fn centre(&self) -> f64 {
        match *self {
            Prior::Normal { mean, .. } => mean,
            Prior::Fixed { value } => value,
        }
    }

    /// Log density up to a constant, and its derivative.
    pub fn log_density(&self, x: f64) -> (f64, f64) {
        match *self {
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z, -z / sd)
            }
            Prior::Fixed { .. } => (0.0, 0.0),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "prior for {what} is malformed: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// One per coefficient, intercept first.
    pub beta: Vec<Prior>,
    pub log_sigma: Prior,
    pub log_phi: Prior,
    pub log_theta: Prior,
}

impl Priors {
    /// Diffuse coefficients, a range centred on an eighth of the grid width,
    /// and unit-scale log priors on sigma and theta.
    pub fn weakly_informative(grid: &Grid, n_beta: usize) -> Self {
        let width = grid.dx * grid.nx as f64;
        Priors {
            beta: vec![
                Prior::Normal {
                    mean: 0.0,
                    sd: 10.0
                };
                n_beta
            ],
            log_sigma: Prior::Normal { mean: 0.0, sd: 0.5 },
            log_phi: Prior::Normal {
                mean: (width / 8.0).ln(),
                sd: 0.5,
            },
            log_theta: Prior::Normal { mean: 0.0, sd: 0.5 },
        }
    }
}

/// Covariates, offset and priors on the inferential grid.
///
/// Covariate and offset layers hold either one value per cell (shared by all
/// times) or one per (time, cell), slice-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub grid: Grid,
    pub covariate_names: Vec<String>,
    covariates: Vec<Vec<f64>>,
    offset: Vec<f64>,
    pub priors: Priors,
}

impl ModelSpec {
    /// Intercept-only model with unit offset.
    pub fn new(grid: Grid) -> Self {
        let priors = Priors::weakly_informative(&grid, 1);
        let n = grid.n_cells();
        ModelSpec {
            grid,
            covariate_names: Vec::new(),
            covariates: Vec::new(),
            offset: vec![1.0; n],
            priors,
        }
    }

    fn check_layer(&self, what: &str, values: &[f64]) -> Result<()> {
        let n = self.grid.n_cells();
        let nt = n * self.grid.n_times();
        if values.len() != n && values.len() != nt {
            return Err(Error::DimensionMismatch(format!(
                "{what} has {} values; expected {n} (per cell) or {nt} (per cell and time)",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "{what} is not finite at entry {k}"
            )));
        }
        Ok(())
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        self.check_layer(&format!("covariate `{name}`"), &values)?;
        self.covariate_names.push(name);
        self.covariates.push(values);
        self.priors.beta.push(Prior::Normal {
            mean: 0.0,
            sd: 10.0,
        });
        Ok(self)
    }

    pub fn with_offset(mut self, values: Vec<f64>) -> Result<Self> {
        self.check_layer("offset", &values)?;
        if let Some(k) = values.iter().position(|v| *v < 0.0) {
            return Err(Error::InvalidModel(format!(
                "offset is negative at entry {k}"
            )));
        }
        self.offset = values;
        Ok(self)
    }

    pub fn with_priors(mut self, priors: Priors) -> Result<Self> {
        if priors.beta.len() != self.n_beta() {
            return Err(Error::InvalidModel(format!(
                "{} coefficient priors for {} coefficients",
                priors.beta.len(),
                self.n_beta()
            )));
        }
        self.priors = priors;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, p) in self.priors.beta.iter().enumerate() {
            p.validate(&format!("beta[{k}]"))?;
        }
        self.priors.log_sigma.validate("log sigma")?;
        self.priors.log_phi.validate("log phi")?;
        self.priors.log_theta.validate("log theta")?;
        if self.priors.beta.len() != self.n_beta() {
            return Err(Error::InvalidModel(
                "one prior per coefficient required".into(),
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn n_times(&self) -> usize {
        self.grid.n_times()
    }

    /// Number of coefficients including the intercept.
    pub fn n_beta(&self) -> usize {
        self.covariates.len() + 1
    }

    pub fn cell_area(&self) -> f64 {
        self.grid.cell_area()
    }

    fn layer_at(values: &[f64], n: usize, t: usize, j: usize) -> f64 {
        if values.len() == n {
            values[j]
        } else {
            values[t * n + j]
        }
    }

    /// `Z_tj,k`, with `k = 0` the intercept column.
    pub fn design(&self, t: usize, j: usize, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            Self::layer_at(&self.covariates[k - 1], self.n_cells(), t, j)
        }
    }

    pub fn offset(&self, t: usize, j: usize) -> f64 {
        Self::layer_at(&self.offset, self.n_cells(), t, j)
    }

    /// Covariate layer `k` (without intercept) as stored.
    pub fn covariate_layer(&self, k: usize) -> &[f64] {
        &self.covariates[k]
    }

    pub fn offset_layer(&self) -> &[f64] {
        &self.offset
    }

    /// Offset of slice `t` expanded to one value per cell.
    pub fn offset_slice(&self, t: usize) -> Vec<f64> {
        (0..self.n_cells()).map(|j| self.offset(t, j)).collect()
    }

    /// `Z_tj β` for every cell of slice `t`.
    pub fn linear_predictor(&self, t: usize, beta: &[f64]) -> Vec<f64> {
        (0..self.n_cells())
            .map(|j| {
                (0..self.n_beta())
                    .map(|k| self.design(t, j, k) * beta[k])
                    .sum()
            })
            .collect()
    }

    /// `C_A λ_tj w_tj` where `w` is the observed fraction of each cell.
    pub fn exposure(&self, coverage: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let ca = self.cell_area();
        (0..self.n_times())
            .map(|t| {
                (0..self.n_cells())
                    .map(|j| ca * self.offset(t, j) * coverage.get(t).map_or(1.0, |c| c[j]))
                    .collect()
            })
            .collect()
    }

    /// Full-cell exposure `C_A λ_tj`, as used for prediction.
    pub fn full_exposure(&self) -> Vec<Vec<f64>> {
        self.exposure(&[])
    }
}
