use super::lgcp::{simulate_lgcp, TrueParams};
use super::regions::{buffer_regions, huff_catchments, voronoi_regions, DEFAULT_BUFFER_SEGMENTS};
use super::report::report_slices;
use crate::allocation::{EffortWeights, RegionTotals};
use crate::error::{Error, Result};
use crate::field::SpectralOperator;
use crate::geometry::{build_grid, Grid, Point, Rect, RegionSet};
use crate::inference::{ModelSpec, Priors};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// How the synthetic aggregation units are laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionLayout {
    /// Voronoi tiles of uniformly placed sites, grown by `buffer` and cropped.
    Voronoi { sites: usize, buffer: f64 },
    /// Huff catchments of uniformly placed facilities.
    Huff {
        facilities: usize,
        delta: f64,
        cutoff: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub window: Rect,
    pub nx: usize,
    pub ny: usize,
    pub times: Vec<f64>,
    /// Coefficients of the covariates (the intercept is solved for).
    pub slopes: Vec<f64>,
    /// Range of the standardised Gaussian covariate surfaces.
    #[serde(default = "default_covariate_range")]
    pub covariate_range: f64,
    /// Expected number of events over all cells and times.
    pub expected_events: f64,
    pub sigma: f64,
    pub phi: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub regions: RegionLayout,
    #[serde(default = "default_segments")]
    pub buffer_segments: usize,
}

fn default_covariate_range() -> f64 {
    4.0
}

fn default_theta() -> f64 {
    1.0
}

fn default_segments() -> usize {
    DEFAULT_BUFFER_SEGMENTS
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.expected_events > 0.0 && self.expected_events.is_finite()) {
            return Err(Error::InvalidConfig(
                "expected_events must be positive".into(),
            ));
        }
        if self.covariate_range.is_nan() || self.covariate_range <= 0.0 {
            return Err(Error::InvalidConfig(
                "covariate_range must be positive".into(),
            ));
        }
        match self.regions {
            RegionLayout::Voronoi { sites, buffer } => {
                if sites == 0 || (buffer.is_nan() || buffer < 0.0) {
                    return Err(Error::InvalidConfig(
                        "need at least one site and a non-negative buffer".into(),
                    ));
                }
            }
            RegionLayout::Huff { facilities, .. } => {
                if facilities == 0 {
                    return Err(Error::InvalidConfig("need at least one facility".into()));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.window, self.nx, self.ny, &self.times)
    }
}

/// A simulated truth together with its aggregated observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub seed: u64,
    pub config: SyntheticConfig,
    pub grid: Grid,
    pub params: TrueParams,
    pub covariate_names: Vec<String>,
    /// Standardised covariate layers, one value per cell.
    pub covariates: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub n: Vec<Vec<u64>>,
    pub points: Vec<Vec<Point>>,
    pub regions: RegionSet,
    pub totals: RegionTotals,
    /// Uncovered points per time slice.
    pub dropped: Vec<u64>,
}

impl SyntheticDataset {
    /// Model over the dataset's grid and covariates with default priors.
    pub fn spec(&self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.grid.clone());
        for (name, layer) in self.covariate_names.iter().zip(&self.covariates) {
            spec = spec.with_covariate(name.clone(), layer.clone())?;
        }
        let priors = Priors::weakly_informative(&self.grid, spec.n_beta());
        spec.with_priors(priors)
    }
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

const COVARIATE_STREAM: u64 = 10;
const FIELD_STREAM: u64 = 11;
const LAYOUT_STREAM: u64 = 12;
const REPORT_STREAM: u64 = 13;
const WARD_STREAM: u64 = 14;

/// Standardised stationary Gaussian surface on the grid.
pub fn gaussian_surface(grid: &Grid, range: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let op = SpectralOperator::new(grid, range)?;
    let gamma: Vec<f64> = (0..grid.n_extended())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut v = op.transform(&gamma, 1.0)?;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::Validation(
            "covariate surface has zero variance".into(),
        ));
    }
    for x in &mut v {
        *x = (*x - mean) / sd;
    }
    Ok(v)
}

fn uniform_points(window: &Rect, k: usize, rng: &mut dyn RngCore) -> Vec<Point> {
    (0..k)
        .map(|_| {
            Point::new(
                window.min_x + window.width() * rng.random::<f64>(),
                window.min_y + window.height() * rng.random::<f64>(),
            )
        })
        .collect()
}

/// Generates a dataset. Covariates, the field, the region layout and the
/// reporting draw from separate streams of `seed`, so datasets that differ
/// only in their region layout share the same truth.
pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let grid = config.grid()?;
    let mut rng = stream(seed, COVARIATE_STREAM);
    let mut spec = ModelSpec::new(grid.clone());
    let mut names = Vec::new();
    let mut layers = Vec::new();
    for k in 0..config.slopes.len() {
        let layer = gaussian_surface(&grid, config.covariate_range, &mut rng)?;
        let name = format!("x{}", k + 1);
        spec = spec.with_covariate(name.clone(), layer.clone())?;
        names.push(name);
        layers.push(layer);
    }
    let mut beta = vec![0.0];
    beta.extend_from_slice(&config.slopes);
    let base: f64 = (0..spec.n_times())
        .flat_map(|t| {
            let s = &spec;
            let eta = s.linear_predictor(t, &beta);
            (0..s.n_cells()).map(move |j| s.cell_area() * s.offset(t, j) * eta[j].exp())
        })
        .sum();
    beta[0] = (config.expected_events / base).ln();
    let params = TrueParams {
        beta,
        sigma: config.sigma,
        phi: config.phi,
        theta: config.theta,
    };

    let draw = simulate_lgcp(&spec, &params, &mut stream(seed, FIELD_STREAM))?;

    let mut rng = stream(seed, LAYOUT_STREAM);
    let regions = match config.regions {
        RegionLayout::Voronoi { sites, buffer } => {
            let base = voronoi_regions(
                &uniform_points(&config.window, sites, &mut rng),
                &config.window,
                "r",
            )?;
            buffer_regions(&base, buffer, &config.window, config.buffer_segments)?
        }
        RegionLayout::Huff {
            facilities,
            delta,
            cutoff,
        } => huff_catchments(
            &uniform_points(&config.window, facilities, &mut rng),
            &grid,
            delta,
            cutoff,
        )?,
    };

    let weights = EffortWeights::from_regions(&regions)?;
    let (totals, dropped) = report_slices(
        &draw.points,
        &regions,
        &weights,
        &grid,
        &mut stream(seed, REPORT_STREAM),
    )?;
    Ok(SyntheticDataset {
        seed,
        config: config.clone(),
        grid,
        params,
        covariate_names: names,
        covariates: layers,
        y: draw.y,
        n: draw.n,
        points: draw.points,
        regions,
        totals,
        dropped,
    })
}

/// A Voronoi partition of the window into `count` tiles, independent of the
/// synthetic truth drawn from the same seed. Used as a new set of units to
/// aggregate predictions onto.
pub fn synthetic_wards(window: &Rect, count: usize, seed: u64) -> Result<RegionSet> {
    let sites = uniform_points(window, count, &mut stream(seed, WARD_STREAM));
    voronoi_regions(&sites, window, "ward")
}
