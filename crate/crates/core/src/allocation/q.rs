use super::EffortWeights;
use crate::error::{Error, Result};
use crate::geometry::{
    build_partition, realise_regions, BoundaryPrior, CellPartition, Grid, Point, Rect, RegionSet,
};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// How a correction table was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo { samples: usize },
    MarginalMc { samples: usize, draws: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub cell: usize,
    /// `|A_i ∩ C_j|` (averaged over boundary draws for marginal tables).
    pub area: f64,
    pub q: f64,
    /// Monte Carlo standard error; zero for exact tables.
    pub std_error: f64,
}

/// Overlap corrections `q_ij`: the probability that an event lying in
/// `A_i ∩ C_j` is reported by region `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub provenance: Provenance,
    /// Per region, entries in increasing cell order.
    pub regions: Vec<Vec<QEntry>>,
}

impl QTable {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn get(&self, region: usize, cell: usize) -> Option<&QEntry> {
        let row = self.regions.get(region)?;
        row.binary_search_by_key(&cell, |e| e.cell)
            .ok()
            .map(|k| &row[k])
    }

    pub fn q(&self, region: usize, cell: usize) -> f64 {
        self.get(region, cell).map_or(0.0, |e| e.q)
    }

    /// `q_ij = 1` wherever a region meets a cell; the no-overlap special case.
    pub fn ones(partition: &CellPartition) -> Self {
        QTable {
            provenance: Provenance::Exact,
            regions: partition
                .region_cells
                .iter()
                .map(|cells| {
                    cells
                        .iter()
                        .map(|&(cell, area)| QEntry {
                            cell,
                            area,
                            q: 1.0,
                            std_error: 0.0,
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Exact corrections by summation over the nonempty partition elements:
/// `q_ij = sum_{k: i in S_k} W(i, S_k) |Ω_k| / |A_i ∩ C_j|`, with the
/// denominator summed over the same elements.
pub fn exact_q(partition: &CellPartition, weights: &EffortWeights) -> Result<QTable> {
    check_regions(partition, weights)?;
    let mut regions = vec![Vec::new(); partition.n_regions];
    for (j, cell) in partition.cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let mut reported: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for el in &cell.elements {
            let ws = weights.signature_weights(j, &el.signature)?;
            for (&i, w) in el.signature.iter().zip(ws) {
                let e = reported.entry(i).or_insert((0.0, 0.0));
                e.0 += w * el.area;
                e.1 += el.area;
            }
        }
        for &(i, area) in &cell.region_areas {
            let (mass, covered) = reported.get(&i).copied().unwrap_or((0.0, 0.0));
            let q = if covered > 0.0 {
                (mass / covered).clamp(0.0, 1.0)
            } else {
                0.0
            };
            regions[i].push(QEntry {
                cell: j,
                area,
                q,
                std_error: 0.0,
            });
        }
    }
    Ok(QTable {
        provenance: Provenance::Exact,
        regions,
    })
}

fn check_regions(partition: &CellPartition, weights: &EffortWeights) -> Result<()> {
    if weights.n_regions() != partition.n_regions {
        return Err(Error::DimensionMismatch(format!(
            "{} effort values for {} regions",
            weights.n_regions(),
            partition.n_regions
        )));
    }
    Ok(())
}

/// Monte Carlo corrections from `m` uniform points per cell.
///
/// Each point is classified by its membership signature against the regions
/// meeting the cell. The estimate for region `i` is the mean reporting weight
/// over the points that fall in `A_i`, so cells without overlap give exactly 1.
/// A region whose footprint in a cell receives no point gets `q = 1` with the
/// maximal standard error 0.5.
pub fn mc_q(
    grid: &Grid,
    regions: &RegionSet,
    partition: &CellPartition,
    weights: &EffortWeights,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<QTable> {
    check_regions(partition, weights)?;
    if regions.len() != partition.n_regions {
        return Err(Error::DimensionMismatch(format!(
            "{} regions for a partition of {}",
            regions.len(),
            partition.n_regions
        )));
    }
    if m == 0 {
        return Err(Error::InvalidConfig(
            "Monte Carlo sample count must be positive".into(),
        ));
    }
    let bboxes: Vec<Rect> = regions.iter().map(|r| r.geometry.bbox()).collect();
    let mut out = vec![Vec::new(); partition.n_regions];
    for (j, cell) in partition.cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let rect = grid.cell_rect(j);
        let local: Vec<usize> = cell.region_areas.iter().map(|(i, _)| *i).collect();
        let nl = local.len();
        let mut hits = vec![0usize; nl];
        let mut sum_w = vec![0.0; nl];
        let mut sum_w2 = vec![0.0; nl];
        let mut cache: HashMap<Vec<bool>, Vec<f64>> = HashMap::new();
        let mut member = vec![false; nl];
        for _ in 0..m {
            let p = Point::new(
                rect.min_x + rect.width() * rng.random::<f64>(),
                rect.min_y + rect.height() * rng.random::<f64>(),
            );
            let mut any = false;
            for (k, &i) in local.iter().enumerate() {
                member[k] = bboxes[i].contains(p) && regions.regions[i].geometry.contains(p);
                any |= member[k];
            }
            if !any {
                continue;
            }
            if !cache.contains_key(&member) {
                let sig: Vec<usize> = local
                    .iter()
                    .zip(&member)
                    .filter(|(_, &m)| m)
                    .map(|(&i, _)| i)
                    .collect();
                let mut ws = vec![0.0; nl];
                for (k, &i) in local.iter().enumerate() {
                    if member[k] {
                        ws[k] = weights.weight(i, j, &sig)?;
                    }
                }
                cache.insert(member.clone(), ws);
            }
            let ws = &cache[&member];
            for k in 0..nl {
                if member[k] {
                    hits[k] += 1;
                    sum_w[k] += ws[k];
                    sum_w2[k] += ws[k] * ws[k];
                }
            }
        }
        for (k, &(i, area)) in cell.region_areas.iter().enumerate() {
            let (q, se) = if hits[k] == 0 {
                (1.0, 0.5)
            } else {
                let h = hits[k] as f64;
                let mean = sum_w[k] / h;
                let var = (sum_w2[k] / h - mean * mean).max(0.0);
                (mean.clamp(0.0, 1.0), (var / h).sqrt())
            };
            out[i].push(QEntry {
                cell: j,
                area,
                q,
                std_error: se,
            });
        }
    }
    Ok(QTable {
        provenance: Provenance::MonteCarlo { samples: m },
        regions: out,
    })
}

/// Corrections averaged over `n_draws` realisations of the boundary
/// variables, each with a fresh partition and `m` points per cell. A draw in
/// which a region misses a cell contributes `q = 0` for that pair.
pub fn marginal_q_uncertain(
    grid: &Grid,
    regions: &RegionSet,
    prior: &dyn BoundaryPrior,
    weights: &EffortWeights,
    m: usize,
    n_draws: usize,
    rng: &mut dyn RngCore,
) -> Result<QTable> {
    if n_draws == 0 {
        return Err(Error::InvalidConfig(
            "need at least one boundary draw".into(),
        ));
    }
    // per region: cell -> (sum area, sum q, sum q^2)
    let mut acc: Vec<BTreeMap<usize, (f64, f64, f64)>> = vec![BTreeMap::new(); regions.len()];
    for _ in 0..n_draws {
        let (realised, _) = realise_regions(regions, prior, rng)?;
        let partition = build_partition(grid, &realised)?;
        let table = mc_q(grid, &realised, &partition, weights, m, rng)?;
        for (i, row) in table.regions.iter().enumerate() {
            for e in row {
                let slot = acc[i].entry(e.cell).or_insert((0.0, 0.0, 0.0));
                slot.0 += e.area;
                slot.1 += e.q;
                slot.2 += e.q * e.q;
            }
        }
    }
    let n = n_draws as f64;
    let regions_out = acc
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(cell, (a, s, s2))| {
                    let mean = s / n;
                    let var = (s2 / n - mean * mean).max(0.0);
                    QEntry {
                        cell,
                        area: a / n,
                        q: mean,
                        std_error: if n_draws > 1 {
                            (var / (n - 1.0)).sqrt()
                        } else {
                            0.0
                        },
                    }
                })
                .collect()
        })
        .collect();
    Ok(QTable {
        provenance: Provenance::MarginalMc {
            samples: m,
            draws: n_draws,
        },
        regions: regions_out,
    })
}
