use crate::error::{Error, Result};
use crate::geometry::RegionSet;
use std::collections::BTreeMap;

/// Reporting propensities used to share events in overlaps between regions.
///
/// An event in a partition element with signature `S` is reported by region
/// `i in S` with probability `e_i / sum_{l in S} e_l`. Efforts can be
/// refined per (region, cell) and per (region, cell, signature).
#[derive(Clone, Debug, PartialEq)]
pub struct EffortWeights {
    region: Vec<f64>,
    per_cell: BTreeMap<(usize, usize), f64>,
    per_element: BTreeMap<(usize, usize, Vec<usize>), f64>,
}

fn check(e: f64) -> Result<f64> {
    if e > 0.0 && e.is_finite() {
        Ok(e)
    } else {
        Err(Error::Effort(format!(
            "effort {e} must be positive and finite"
        )))
    }
}

impl EffortWeights {
    pub fn new(efforts: Vec<f64>) -> Result<Self> {
        for &e in &efforts {
            check(e)?;
        }
        Ok(EffortWeights {
            region: efforts,
            per_cell: BTreeMap::new(),
            per_element: BTreeMap::new(),
        })
    }

    /// Equal efforts: overlap events go to any covering region at random.
    pub fn uniform(n_regions: usize) -> Self {
        EffortWeights::new(vec![1.0; n_regions]).expect("unit efforts")
    }

    pub fn from_regions(regions: &RegionSet) -> Result<Self> {
        EffortWeights::new(regions.efforts())
    }

    pub fn n_regions(&self) -> usize {
        self.region.len()
    }

    pub fn with_cell_effort(mut self, region: usize, cell: usize, effort: f64) -> Result<Self> {
        self.check_region(region)?;
        self.per_cell.insert((region, cell), check(effort)?);
        Ok(self)
    }

    pub fn with_element_effort(
        mut self,
        region: usize,
        cell: usize,
        mut signature: Vec<usize>,
        effort: f64,
    ) -> Result<Self> {
        self.check_region(region)?;
        signature.sort_unstable();
        if !signature.contains(&region) {
            return Err(Error::Effort(format!(
                "signature {signature:?} does not contain region {region}"
            )));
        }
        self.per_element
            .insert((region, cell, signature), check(effort)?);
        Ok(self)
    }

    fn check_region(&self, region: usize) -> Result<()> {
        if region >= self.region.len() {
            return Err(Error::Effort(format!(
                "region index {region} out of range ({} regions)",
                self.region.len()
            )));
        }
        Ok(())
    }

    pub fn has_overrides(&self) -> bool {
        !self.per_cell.is_empty() || !self.per_element.is_empty()
    }

    /// Effective effort of region `i` in cell `j` for points with signature `sig`.
    pub fn effort(&self, i: usize, j: usize, sig: &[usize]) -> f64 {
        if !self.per_element.is_empty() {
            if let Some(e) = self.per_element.get(&(i, j, sig.to_vec())) {
                return *e;
            }
        }
        if let Some(e) = self.per_cell.get(&(i, j)) {
            return *e;
        }
        self.region[i]
    }

    /// Probability that region `i` reports a point with signature `sig` in cell `j`.
    pub fn weight(&self, i: usize, j: usize, sig: &[usize]) -> Result<f64> {
        if !sig.contains(&i) {
            return Ok(0.0);
        }
        let total = self.total(j, sig)?;
        Ok(self.effort(i, j, sig) / total)
    }

    /// Weights of every member of `sig`, in signature order; they sum to one.
    pub fn signature_weights(&self, j: usize, sig: &[usize]) -> Result<Vec<f64>> {
        let total = self.total(j, sig)?;
        Ok(sig
            .iter()
            .map(|&l| self.effort(l, j, sig) / total)
            .collect())
    }

    fn total(&self, j: usize, sig: &[usize]) -> Result<f64> {
        for &l in sig {
            self.check_region(l)?;
        }
        let total: f64 = sig.iter().map(|&l| self.effort(l, j, sig)).sum();
        if total > 0.0 && total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Effort(format!(
                "signature {sig:?} in cell {j} has total effort {total}"
            )))
        }
    }
}
