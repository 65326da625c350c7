//! Allocation of reported region totals to grid cells: effort weights,
//! overlap corrections and the multinomial augmentation draw.

mod draw;
mod effort;
mod q;

pub use draw::{
    base_mass, draw_augmented_counts, draw_slice, initialise_counts, multinomial, AllocEntry,
    AllocationTable, AugmentedCounts, SliceAllocation,
};
pub use effort::EffortWeights;
pub use q::{exact_q, marginal_q_uncertain, mc_q, Provenance, QEntry, QTable};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Observed totals `T_{ti}`, slice-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTotals {
    counts: Vec<Vec<u64>>,
}

impl RegionTotals {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Validation(
                "need totals for at least one time slice".into(),
            ));
        }
        let m = counts[0].len();
        if counts.iter().any(|c| c.len() != m) {
            return Err(Error::DimensionMismatch(
                "every time slice needs one total per region".into(),
            ));
        }
        Ok(RegionTotals { counts })
    }

    /// A single (spatial-only) slice.
    pub fn spatial(counts: Vec<u64>) -> Self {
        RegionTotals {
            counts: vec![counts],
        }
    }

    pub fn n_times(&self) -> usize {
        self.counts.len()
    }

    pub fn n_regions(&self) -> usize {
        self.counts[0].len()
    }

    pub fn get(&self, t: usize, i: usize) -> u64 {
        self.counts[t][i]
    }

    pub fn slice(&self, t: usize) -> &[u64] {
        &self.counts[t]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn as_rows(&self) -> &[Vec<u64>] {
        &self.counts
    }
}
