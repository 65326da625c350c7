use crate::allocation::{EffortWeights, RegionTotals};
use crate::error::{Error, Result};
use crate::geometry::{Grid, Point, Rect, RegionSet};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// Region totals of one batch of points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub totals: Vec<u64>,
    /// Points covered by no region.
    pub dropped: u64,
}

struct Index<'a> {
    regions: &'a RegionSet,
    boxes: Vec<Rect>,
}

impl<'a> Index<'a> {
    fn new(regions: &'a RegionSet) -> Self {
        Index {
            regions,
            boxes: regions.iter().map(|r| r.geometry.bbox()).collect(),
        }
    }

    fn signature(&self, p: Point, active: &[bool]) -> Vec<usize> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(i, r)| active[*i] && self.boxes[*i].contains(p) && r.geometry.contains(p))
            .map(|(i, _)| i)
            .collect()
    }
}

fn report_with(
    index: &Index,
    points: &[Point],
    active: &[bool],
    weights: &EffortWeights,
    grid: &Grid,
    rng: &mut dyn RngCore,
) -> Result<Report> {
    let mut totals = vec![0u64; index.regions.len()];
    let mut dropped = 0;
    for &p in points {
        let sig = index.signature(p, active);
        match sig.as_slice() {
            [] => dropped += 1,
            [i] => totals[*i] += 1,
            _ => {
                let j = grid.locate(p).unwrap_or(0);
                let w = weights.signature_weights(j, &sig)?;
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = sig[sig.len() - 1];
                for (k, wk) in w.iter().enumerate() {
                    acc += wk;
                    if u < acc {
                        pick = sig[k];
                        break;
                    }
                }
                totals[pick] += 1;
            }
        }
    }
    if dropped > 0 {
        log::info!(
            "{dropped} of {} points fall outside every region",
            points.len()
        );
    }
    Ok(Report { totals, dropped })
}

/// Assigns each point to one region containing it, chosen in proportion to
/// effort over the regions containing the point. Uncovered points are dropped
/// and counted.
pub fn report_counts(
    points: &[Point],
    regions: &RegionSet,
    weights: &EffortWeights,
    grid: &Grid,
    rng: &mut dyn RngCore,
) -> Result<Report> {
    check(regions, weights)?;
    let active = vec![true; regions.len()];
    report_with(&Index::new(regions), points, &active, weights, grid, rng)
}

/// [`report_counts`] per time slice, with only active regions reporting.
pub fn report_slices(
    points: &[Vec<Point>],
    regions: &RegionSet,
    weights: &EffortWeights,
    grid: &Grid,
    rng: &mut dyn RngCore,
) -> Result<(RegionTotals, Vec<u64>)> {
    check(regions, weights)?;
    let index = Index::new(regions);
    let mut rows = Vec::with_capacity(points.len());
    let mut dropped = Vec::with_capacity(points.len());
    for (t, pts) in points.iter().enumerate() {
        let r = report_with(&index, pts, &regions.active_at(t), weights, grid, rng)?;
        rows.push(r.totals);
        dropped.push(r.dropped);
    }
    Ok((RegionTotals::new(rows)?, dropped))
}

fn check(regions: &RegionSet, weights: &EffortWeights) -> Result<()> {
    if weights.n_regions() != regions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} effort weights for {} regions",
            weights.n_regions(),
            regions.len()
        )));
    }
    Ok(())
}
