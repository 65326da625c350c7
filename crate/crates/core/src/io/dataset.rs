use super::{read_counts, read_regions, resample_to_grid, AsciiRaster, RunConfig};
use crate::allocation::RegionTotals;
use crate::error::{Error, Result};
use crate::geometry::{Grid, RegionSet};
use crate::inference::{ModelSpec, Priors};
use std::path::PathBuf;

/// Everything a fit needs, projected onto the inferential grid.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub grid: Grid,
    pub regions: RegionSet,
    pub totals: RegionTotals,
    pub spec: ModelSpec,
    /// `(mean, sd)` removed from each covariate when standardising.
    pub scaling: Vec<(f64, f64)>,
}

fn layer(files: &[PathBuf], grid: &Grid) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(files.len() * grid.n_cells());
    for f in files {
        let raster = AsciiRaster::read(f)?;
        let values = resample_to_grid(&raster, grid)
            .map_err(|e| Error::Validation(format!("{}: {e}", f.display())))?;
        out.extend(values);
    }
    Ok(out)
}

fn standardise(values: &mut [f64], name: &str) -> Result<(f64, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::InvalidModel(format!(
            "covariate `{name}` is constant and cannot be standardised"
        )));
    }
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    Ok((mean, sd))
}

/// Reads regions, counts and rasters named by the configuration and builds
/// the model specification.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let grid = config.grid.build()?;
    let mut regions = read_regions(&config.paths.regions)?;
    for decl in &config.boundaries {
        let i = regions.index_of(&decl.region).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "boundary model names unknown region `{}`",
                decl.region
            ))
        })?;
        regions.regions[i].boundary = decl.model.clone();
    }
    regions.validate()?;
    let totals = read_counts(&config.paths.counts, &regions, grid.n_times())?;

    let mut spec = ModelSpec::new(grid.clone());
    let mut scaling = Vec::new();
    for c in &config.paths.covariates {
        let mut values = layer(&c.files, &grid)?;
        if config.model.standardise {
            scaling.push(standardise(&mut values, &c.name)?);
        } else {
            scaling.push((0.0, 1.0));
        }
        spec = spec.with_covariate(c.name.clone(), values)?;
    }
    if !config.paths.offset.is_empty() {
        spec = spec.with_offset(layer(&config.paths.offset, &grid)?)?;
    }
    let priors = config
        .model
        .priors
        .apply(Priors::weakly_informative(&grid, spec.n_beta()));
    let spec = spec.with_priors(priors)?;
    Ok(Dataset {
        grid,
        regions,
        totals,
        spec,
        scaling,
    })
}
