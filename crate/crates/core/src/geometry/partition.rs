use super::arrangement::signature_areas;
use super::clip::{clip_ring_to_rect, DEFAULT_SNAP_TOLERANCE};
use super::{ring_signed_area, Grid, MultiPolygon, Rect, RegionSet};
use crate::error::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Piece of a cell covered by exactly the regions in `signature`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionElement {
    /// Sorted region indices (positions in the [`RegionSet`]).
    pub signature: Vec<usize>,
    pub area: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    /// Nonempty elements only; never all `2^r` subsets.
    pub elements: Vec<PartitionElement>,
    /// Area covered by no region.
    pub residual: f64,
    /// `(region, |A_i ∩ C_j|)` for every region meeting the cell.
    pub region_areas: Vec<(usize, f64)>,
}

impl CellEntry {
    pub fn is_empty(&self) -> bool {
        self.region_areas.is_empty()
    }

    pub fn region_area(&self, region: usize) -> f64 {
        self.region_areas
            .iter()
            .find(|(r, _)| *r == region)
            .map_or(0.0, |(_, a)| *a)
    }

    pub fn covered_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }
}

/// Per-cell partition of the grid by all region intersections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    pub cell_area: f64,
    pub n_regions: usize,
    pub cells: Vec<CellEntry>,
    /// For each region, the `(cell, |A_i ∩ C_j|)` pairs it touches, in cell order.
    pub region_cells: Vec<Vec<(usize, f64)>>,
}

impl CellPartition {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Fraction of each cell covered by at least one region.
    pub fn coverage(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| (c.covered_area() / self.cell_area).clamp(0.0, 1.0))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct PartitionOptions {
    pub snap_tolerance: f64,
    /// Intersections smaller than this fraction of a cell are treated as empty.
    pub min_area_fraction: f64,
    /// Restricts the partition to a subset of regions (e.g. those active at one time).
    pub active: Option<Vec<bool>>,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            snap_tolerance: DEFAULT_SNAP_TOLERANCE,
            min_area_fraction: 1e-12,
            active: None,
        }
    }
}

/// `|A ∩ cell|` for a region geometry (union of its parts).
pub fn intersect_region_cell(region: &MultiPolygon, cell: &Rect) -> f64 {
    intersect_with_snap(region, cell, DEFAULT_SNAP_TOLERANCE)
}

fn intersect_with_snap(region: &MultiPolygon, cell: &Rect, snap: f64) -> f64 {
    match region.parts() {
        [part] => {
            if !part.bbox().intersects(cell) {
                return 0.0;
            }
            let mut area = 0.0;
            for (k, ring) in part.rings().enumerate() {
                let a = ring_signed_area(&clip_ring_to_rect(ring, cell, snap)).abs();
                if k == 0 {
                    area += a;
                } else {
                    area -= a;
                }
            }
            area.max(0.0)
        }
        _ => signature_areas(cell, &[region], snap)
            .iter()
            .map(|s| s.area)
            .sum(),
    }
}

pub fn build_partition(grid: &Grid, regions: &RegionSet) -> Result<CellPartition> {
    build_partition_with(grid, regions, &PartitionOptions::default())
}

/// Builds the partition of every grid cell. Candidate cells per region come
/// from its bounding box; each cell is then split only over the regions that
/// actually meet it.
pub fn build_partition_with(
    grid: &Grid,
    regions: &RegionSet,
    opts: &PartitionOptions,
) -> Result<CellPartition> {
    regions.validate()?;
    let n_cells = grid.n_cells();
    let cell_area = grid.cell_area();
    let min_area = opts.min_area_fraction * cell_area;

    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    for (i, region) in regions.iter().enumerate() {
        if opts.active.as_ref().is_some_and(|a| !a[i]) {
            continue;
        }
        let bbox = region.geometry.bbox();
        for j in grid.cells_overlapping(&bbox) {
            candidates[j].push(i);
        }
    }

    let cells: Vec<CellEntry> = candidates
        .par_iter()
        .enumerate()
        .map(|(j, local)| {
            if local.is_empty() {
                return CellEntry {
                    residual: cell_area,
                    ..CellEntry::default()
                };
            }
            let rect = grid.cell_rect(j);
            let region_areas: Vec<(usize, f64)> = local
                .iter()
                .map(|&i| {
                    (
                        i,
                        intersect_with_snap(
                            &regions.regions[i].geometry,
                            &rect,
                            opts.snap_tolerance,
                        ),
                    )
                })
                .filter(|(_, a)| *a > min_area)
                .collect();
            if region_areas.is_empty() {
                return CellEntry {
                    residual: cell_area,
                    ..CellEntry::default()
                };
            }
            let geoms: Vec<&MultiPolygon> = region_areas
                .iter()
                .map(|(i, _)| &regions.regions[*i].geometry)
                .collect();
            let elements: Vec<PartitionElement> =
                signature_areas(&rect, &geoms, opts.snap_tolerance)
                    .into_iter()
                    .filter(|s| s.area > min_area)
                    .map(|s| PartitionElement {
                        signature: s.signature.iter().map(|&k| region_areas[k].0).collect(),
                        area: s.area,
                    })
                    .collect();
            let covered: f64 = elements.iter().map(|e| e.area).sum();
            CellEntry {
                elements,
                residual: (cell_area - covered).max(0.0),
                region_areas,
            }
        })
        .collect();

    let mut region_cells = vec![Vec::new(); regions.len()];
    for (j, c) in cells.iter().enumerate() {
        for &(i, a) in &c.region_areas {
            region_cells[i].push((j, a));
        }
    }
    Ok(CellPartition {
        cell_area,
        n_regions: regions.len(),
        cells,
        region_cells,
    })
}
