use crate::error::{Error, Result};
use crate::geometry::{intersect_region_cell, Grid, RegionSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fraction `|A_r ∩ C_j| / C_A` of each cell inside each new region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReaggregationWeights {
    pub region_ids: Vec<String>,
    pub n_cells: usize,
    /// Per region, `(cell, weight)` for every cell it meets.
    pub cells: Vec<Vec<(usize, f64)>>,
}

impl ReaggregationWeights {
    /// Ids of regions that meet no cell.
    pub fn outside(&self) -> Vec<String> {
        self.region_ids
            .iter()
            .zip(&self.cells)
            .filter(|(_, c)| c.is_empty())
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn apply(&self, counts: &[f64]) -> Vec<f64> {
        self.cells
            .iter()
            .map(|cells| cells.iter().map(|&(j, w)| w * counts[j]).sum())
            .collect()
    }
}

pub fn reaggregation_weights(regions: &RegionSet, grid: &Grid) -> Result<ReaggregationWeights> {
    regions.validate()?;
    let ca = grid.cell_area();
    let cells: Vec<Vec<(usize, f64)>> = regions
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| {
            let bbox = r.geometry.bbox();
            grid.cells_overlapping(&bbox)
                .filter_map(|j| {
                    let a = intersect_region_cell(&r.geometry, &grid.cell_rect(j));
                    (a > 0.0).then(|| (j, (a / ca).min(1.0)))
                })
                .collect()
        })
        .collect();
    Ok(ReaggregationWeights {
        region_ids: regions.iter().map(|r| r.id.clone()).collect(),
        n_cells: grid.n_cells(),
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub id: String,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReaggregationResult {
    pub region_ids: Vec<String>,
    /// Central credible level of `lower`/`upper`.
    pub level: f64,
    /// `values[s][r]`: weighted count of region `r` in sample `s`.
    pub values: Vec<Vec<f64>>,
    pub summaries: Vec<RegionSummary>,
    /// Regions meeting no grid cell; their values are all zero.
    pub outside: Vec<String>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sums per-sample cell counts over each new region, weighting each cell by
/// the fraction of it the region contains. Values stay fractional.
pub fn reaggregate(
    draws: &[Vec<f64>],
    regions: &RegionSet,
    grid: &Grid,
    level: f64,
) -> Result<ReaggregationResult> {
    if draws.is_empty() {
        return Err(Error::EmptyChain("no predictive draws".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!(
            "credible level {level} must lie in (0, 1)"
        )));
    }
    if let Some(d) = draws.iter().find(|d| d.len() != grid.n_cells()) {
        return Err(Error::DimensionMismatch(format!(
            "draw has {} cells, grid {}",
            d.len(),
            grid.n_cells()
        )));
    }
    let weights = reaggregation_weights(regions, grid)?;
    let outside = weights.outside();
    for id in &outside {
        log::warn!("region `{id}` does not meet the grid");
    }
    let values: Vec<Vec<f64>> = draws.par_iter().map(|d| weights.apply(d)).collect();
    let ns = values.len() as f64;
    let summaries = weights
        .region_ids
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let mut col: Vec<f64> = values.iter().map(|v| v[r]).collect();
            let mean = col.iter().sum::<f64>() / ns;
            col.sort_by(f64::total_cmp);
            RegionSummary {
                id: id.clone(),
                mean,
                median: quantile(&col, 0.5),
                lower: quantile(&col, 0.5 - level / 2.0),
                upper: quantile(&col, 0.5 + level / 2.0),
            }
        })
        .collect();
    Ok(ReaggregationResult {
        region_ids: weights.region_ids,
        level,
        values,
        summaries,
        outside,
    })
}

/// Winner declaration across competing count processes over the same regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinnerTable {
    pub region_ids: Vec<String>,
    pub processes: Vec<String>,
    /// `medians[r][p]`.
    pub medians: Vec<Vec<f64>>,
    /// Processes sharing the largest median in each region; more than one
    /// entry is a tie.
    pub winners: Vec<Vec<usize>>,
    /// `win_probability[r][p]`: share of paired samples in which process `p`
    /// is largest, a tied sample crediting each tied process equally.
    pub win_probability: Vec<Vec<f64>>,
}

/// Compares processes region by region. Samples are paired by index, which
/// treats the processes' predictive draws as independent.
pub fn compare_processes(processes: &[(&str, &ReaggregationResult)]) -> Result<WinnerTable> {
    let Some((_, first)) = processes.first() else {
        return Err(Error::Validation("no processes to compare".into()));
    };
    for (name, p) in processes {
        if p.region_ids != first.region_ids {
            return Err(Error::DimensionMismatch(format!(
                "process `{name}` covers different regions"
            )));
        }
        if p.values.is_empty() {
            return Err(Error::EmptyChain(format!(
                "process `{name}` has no samples"
            )));
        }
    }
    let n_regions = first.region_ids.len();
    let n_pairs = processes
        .iter()
        .map(|(_, p)| p.values.len())
        .min()
        .unwrap_or(0);
    let medians: Vec<Vec<f64>> = (0..n_regions)
        .map(|r| {
            processes
                .iter()
                .map(|(_, p)| p.summaries[r].median)
                .collect()
        })
        .collect();
    let argmax_all = |v: &[f64]| -> Vec<usize> {
        let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..v.len()).filter(|&k| v[k] == best).collect()
    };
    let winners = medians.iter().map(|m| argmax_all(m)).collect();
    let win_probability = (0..n_regions)
        .map(|r| {
            let mut wins = vec![0.0; processes.len()];
            for s in 0..n_pairs {
                let v: Vec<f64> = processes.iter().map(|(_, p)| p.values[s][r]).collect();
                let top = argmax_all(&v);
                for &k in &top {
                    wins[k] += 1.0 / top.len() as f64;
                }
            }
            wins.iter().map(|w| w / n_pairs as f64).collect()
        })
        .collect();
    Ok(WinnerTable {
        region_ids: first.region_ids.clone(),
        processes: processes.iter().map(|(n, _)| n.to_string()).collect(),
        medians,
        winners,
        win_probability,
    })
}
