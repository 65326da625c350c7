use super::{parse_error, read_text};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryModel, Grid, Rect};
use crate::inference::{Prior, Priors, SamplerConfig};
use crate::simulate::{RegionLayout, SyntheticConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// A complete run description, read from one TOML file. Relative paths are
/// resolved against the directory holding the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Seeds the sampler, prediction and simulation streams.
    pub seed: u64,
    pub paths: Paths,
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Boundary models overriding those in the regions file.
    #[serde(default, rename = "boundary")]
    pub boundaries: Vec<BoundaryDecl>,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub aggregate: Option<AggregateSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub regions: PathBuf,
    pub counts: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub covariates: Vec<CovariateSource>,
    /// One raster shared by all times, or one per time.
    #[serde(default)]
    pub offset: Vec<PathBuf>,
}

/// A covariate layer: one raster shared by all times, or one per time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSource {
    pub name: String,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub window: Rect,
    pub nx: usize,
    pub ny: usize,
    pub times: Vec<f64>,
    #[serde(default = "default_extension")]
    pub extension: usize,
}

fn default_extension() -> usize {
    2
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(
            self.window,
            self.nx,
            self.ny,
            self.times.clone(),
            self.extension,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Rescale each covariate to mean 0 and sd 1 over all cells and times.
    pub standardise: bool,
    pub priors: PriorOverrides,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            standardise: true,
            priors: PriorOverrides::default(),
        }
    }
}

/// Priors replacing the weakly informative defaults; `coefficients` applies
/// to every covariate slope.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorOverrides {
    pub intercept: Option<Prior>,
    pub coefficients: Option<Prior>,
    pub log_sigma: Option<Prior>,
    pub log_phi: Option<Prior>,
    pub log_theta: Option<Prior>,
}

impl PriorOverrides {
    pub fn apply(&self, mut priors: Priors) -> Priors {
        if let Some(p) = self.intercept {
            priors.beta[0] = p;
        }
        if let Some(p) = self.coefficients {
            priors.beta[1..].iter_mut().for_each(|b| *b = p);
        }
        priors.log_sigma = self.log_sigma.unwrap_or(priors.log_sigma);
        priors.log_phi = self.log_phi.unwrap_or(priors.log_phi);
        priors.log_theta = self.log_theta.unwrap_or(priors.log_theta);
        priors
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryDecl {
    pub region: String,
    pub model: BoundaryModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    /// Relative-risk thresholds for exceedance maps.
    pub thresholds: Vec<f64>,
    pub level: f64,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            thresholds: vec![1.5, 2.0],
            level: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateSection {
    /// New partition to aggregate predictions onto.
    pub regions: PathBuf,
    /// Time slice to aggregate; all slices when absent.
    #[serde(default)]
    pub time: Option<usize>,
}

/// Synthetic truth written to the configured input paths by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub slopes: Vec<f64>,
    #[serde(default = "default_covariate_range")]
    pub covariate_range: f64,
    pub expected_events: f64,
    pub sigma: f64,
    pub phi: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub regions: RegionLayout,
    /// Voronoi tiles written to the aggregate regions path, if one is configured.
    #[serde(default)]
    pub wards: usize,
}

fn default_covariate_range() -> f64 {
    4.0
}

fn default_theta() -> f64 {
    1.0
}

impl SimulateSection {
    pub fn synthetic_config(&self, grid: &GridSpec) -> SyntheticConfig {
        SyntheticConfig {
            window: grid.window,
            nx: grid.nx,
            ny: grid.ny,
            times: grid.times.clone(),
            slopes: self.slopes.clone(),
            covariate_range: self.covariate_range,
            expected_events: self.expected_events,
            sigma: self.sigma,
            phi: self.phi,
            theta: self.theta,
            regions: self.regions.clone(),
            buffer_segments: crate::simulate::DEFAULT_BUFFER_SEGMENTS,
        }
    }
}

impl RunConfig {
    /// Parses and validates; relative paths become relative to `base`.
    pub fn parse(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| parse_error(path, e))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.resolve(base);
        cfg.sampler.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&read_text(path)?, path, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.regions);
        fix(&mut self.paths.counts);
        fix(&mut self.paths.output);
        self.paths.offset.iter_mut().for_each(fix);
        for c in &mut self.paths.covariates {
            c.files.iter_mut().for_each(fix);
        }
        if let Some(a) = &mut self.aggregate {
            fix(&mut a.regions);
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sampler.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.sampler.validate()?;
        let n_t = grid.n_times();
        let layer_ok = |n: usize| n == 1 || n == n_t;
        for c in &self.paths.covariates {
            if !layer_ok(c.files.len()) {
                return Err(Error::InvalidConfig(format!(
                    "covariate `{}` lists {} files; give one, or one per time ({n_t})",
                    c.name,
                    c.files.len()
                )));
            }
        }
        if !self.paths.offset.is_empty() && !layer_ok(self.paths.offset.len()) {
            return Err(Error::InvalidConfig(format!(
                "offset lists {} files; give one, or one per time ({n_t})",
                self.paths.offset.len()
            )));
        }
        let p = &self.predict;
        if p.thresholds.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig(
                "exceedance thresholds must be positive".into(),
            ));
        }
        if !(p.level > 0.0 && p.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "credible level {} must lie in (0, 1)",
                p.level
            )));
        }
        if let Some(a) = &self.aggregate {
            if a.time.is_some_and(|t| t >= n_t) {
                return Err(Error::InvalidConfig(format!(
                    "aggregate time {:?} is out of range",
                    a.time
                )));
            }
        }
        if let Some(s) = &self.simulate {
            if s.slopes.len() != self.paths.covariates.len() {
                return Err(Error::InvalidConfig(format!(
                    "simulation has {} slopes but {} covariates are configured",
                    s.slopes.len(),
                    self.paths.covariates.len()
                )));
            }
            s.synthetic_config(&self.grid).validate()?;
        }
        Ok(())
    }

    /// Canonical serialisation used for digests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}
