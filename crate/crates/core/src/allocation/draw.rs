use super::{Provenance, QTable, RegionTotals};
use crate::error::{Error, Result};
use crate::geometry::CellPartition;
use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocEntry {
    pub cell: usize,
    /// `|A_i ∩ C_j| · λ_j · exp(Z_j β + Y_j)`.
    pub p: f64,
    pub q: f64,
}

/// Per-region allocation probabilities for one time slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationTable {
    pub provenance: Provenance,
    pub n_cells: usize,
    pub regions: Vec<Vec<AllocEntry>>,
    /// `p_ij q_ij` normalised per region; all zero when the region has no mass.
    pub probs: Vec<Vec<f64>>,
}

/// Base masses `p_ij` for every region meeting cell `j`, where `eta` is the
/// log relative risk `Z β + Y` per cell and `offset` the optional population
/// offset `λ_j`.
pub fn base_mass(
    partition: &CellPartition,
    eta: &[f64],
    offset: Option<&[f64]>,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = partition.n_cells();
    if eta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "log relative risk has {} cells, partition has {n}",
            eta.len()
        )));
    }
    if let Some(o) = offset {
        if o.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "offset has {} cells, partition has {n}",
                o.len()
            )));
        }
    }
    Ok(partition
        .region_cells
        .iter()
        .map(|cells| {
            cells
                .iter()
                .map(|&(j, area)| {
                    let lam = offset.map_or(1.0, |o| o[j]);
                    (j, area * lam * eta[j].exp())
                })
                .collect()
        })
        .collect())
}

impl AllocationTable {
    /// Joins base masses with corrections (both in partition cell order).
    pub fn new(n_cells: usize, p: Vec<Vec<(usize, f64)>>, q: &QTable) -> Result<Self> {
        if p.len() != q.n_regions() {
            return Err(Error::DimensionMismatch(format!(
                "{} base-mass rows for {} correction rows",
                p.len(),
                q.n_regions()
            )));
        }
        let mut regions = Vec::with_capacity(p.len());
        let mut probs = Vec::with_capacity(p.len());
        for (i, row) in p.into_iter().enumerate() {
            let entries: Vec<AllocEntry> = row
                .into_iter()
                .map(|(cell, p)| AllocEntry {
                    cell,
                    p,
                    q: q.q(i, cell),
                })
                .collect();
            let total: f64 = entries.iter().map(|e| e.p * e.q).sum();
            let pr = if total > 0.0 && total.is_finite() {
                entries.iter().map(|e| e.p * e.q / total).collect()
            } else {
                vec![0.0; entries.len()]
            };
            regions.push(entries);
            probs.push(pr);
        }
        Ok(AllocationTable {
            provenance: q.provenance,
            n_cells,
            regions,
            probs,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    /// Total unnormalised mass `sum_j p_ij q_ij` of region `i`.
    pub fn mass(&self, i: usize) -> f64 {
        self.regions[i].iter().map(|e| e.p * e.q).sum()
    }
}

/// Allocation of one time slice: per region, the nonzero `(cell, count)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceAllocation {
    pub regions: Vec<Vec<(usize, u64)>>,
}

impl SliceAllocation {
    pub fn region_total(&self, i: usize) -> u64 {
        self.regions[i].iter().map(|(_, c)| c).sum()
    }

    pub fn cell_totals(&self, n_cells: usize) -> Vec<u64> {
        let mut n = vec![0u64; n_cells];
        for row in &self.regions {
            for &(j, c) in row {
                n[j] += c;
            }
        }
        n
    }
}

/// Latent cell counts together with the allocation that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCounts {
    pub n_cells: usize,
    pub slices: Vec<SliceAllocation>,
    /// `N_tj`, slice-major.
    pub cells: Vec<Vec<u64>>,
}

impl AugmentedCounts {
    pub fn from_slices(n_cells: usize, slices: Vec<SliceAllocation>) -> Self {
        let cells = slices.iter().map(|s| s.cell_totals(n_cells)).collect();
        AugmentedCounts {
            n_cells,
            slices,
            cells,
        }
    }

    pub fn n_times(&self) -> usize {
        self.slices.len()
    }

    /// Number of (region, time) pairs whose allocation does not sum to the observed total.
    pub fn conservation_violations(&self, totals: &RegionTotals) -> usize {
        let mut bad = 0;
        for (t, s) in self.slices.iter().enumerate() {
            for i in 0..totals.n_regions() {
                let got = if i < s.regions.len() {
                    s.region_total(i)
                } else {
                    0
                };
                if got != totals.get(t, i) {
                    bad += 1;
                }
            }
        }
        bad + totals.n_times().abs_diff(self.slices.len())
    }

    /// Cell counts of slice `t` as reals, for the likelihood.
    pub fn cell_counts_f64(&self, t: usize) -> Vec<f64> {
        self.cells[t].iter().map(|&c| c as f64).collect()
    }
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial(n: u64, probs: &[f64], rng: &mut dyn RngCore) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    if n == 0 || probs.is_empty() {
        return out;
    }
    let mut suffix = vec![0.0; probs.len() + 1];
    for k in (0..probs.len()).rev() {
        suffix[k] = suffix[k + 1] + probs[k].max(0.0);
    }
    let mut left = n;
    for k in 0..probs.len() {
        if left == 0 {
            break;
        }
        let pk = probs[k].max(0.0);
        if pk == 0.0 {
            continue;
        }
        let rest = suffix[k];
        let share = if rest > 0.0 {
            (pk / rest).min(1.0)
        } else {
            1.0
        };
        let last_with_mass = suffix[k + 1] <= 0.0;
        let draw = if share >= 1.0 || last_with_mass {
            left
        } else {
            Binomial::new(left, share)
                .expect("share in [0, 1)")
                .sample(rng)
        };
        out[k] = draw;
        left -= draw;
    }
    out
}

/// Draws one slice: `alloc[i][.] ~ Multinomial(T_i, p_i. q_i. / sum)`.
pub fn draw_slice(
    totals: &[u64],
    table: &AllocationTable,
    time: usize,
    rng: &mut dyn RngCore,
) -> Result<SliceAllocation> {
    if totals.len() != table.n_regions() {
        return Err(Error::DimensionMismatch(format!(
            "{} region totals for {} regions",
            totals.len(),
            table.n_regions()
        )));
    }
    let mut regions = Vec::with_capacity(totals.len());
    for (i, &t_i) in totals.iter().enumerate() {
        if t_i == 0 {
            regions.push(Vec::new());
            continue;
        }
        let probs = &table.probs[i];
        if !probs.iter().any(|p| *p > 0.0) {
            return Err(Error::NoAllocationMass {
                region: i.to_string(),
                time,
                total: t_i,
            });
        }
        let counts = multinomial(t_i, probs, rng);
        regions.push(
            table.regions[i]
                .iter()
                .zip(counts)
                .filter(|(_, c)| *c > 0)
                .map(|(e, c)| (e.cell, c))
                .collect(),
        );
    }
    Ok(SliceAllocation { regions })
}

/// Redraws all slices given one table per time slice.
pub fn draw_augmented_counts(
    totals: &RegionTotals,
    tables: &[AllocationTable],
    rng: &mut dyn RngCore,
) -> Result<AugmentedCounts> {
    if tables.len() != totals.n_times() {
        return Err(Error::DimensionMismatch(format!(
            "{} allocation tables for {} time slices",
            tables.len(),
            totals.n_times()
        )));
    }
    let n_cells = tables.first().map_or(0, |t| t.n_cells);
    let slices = tables
        .iter()
        .enumerate()
        .map(|(t, table)| draw_slice(totals.slice(t), table, t, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentedCounts::from_slices(n_cells, slices))
}

/// Starting allocation proportional to offset mass `|A_i ∩ C_j| λ_j`
/// (uniform over each region when no offset is given).
pub fn initialise_counts(
    totals: &RegionTotals,
    partitions: &[&CellPartition],
    offset: Option<&[Vec<f64>]>,
    rng: &mut dyn RngCore,
) -> Result<AugmentedCounts> {
    if partitions.len() != totals.n_times() {
        return Err(Error::DimensionMismatch(format!(
            "{} partitions for {} time slices",
            partitions.len(),
            totals.n_times()
        )));
    }
    let tables = partitions
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let zero = vec![0.0; p.n_cells()];
            let lam = offset.map(|o| o[t].as_slice());
            AllocationTable::new(p.n_cells(), base_mass(p, &zero, lam)?, &QTable::ones(p))
        })
        .collect::<Result<Vec<_>>>()?;
    draw_augmented_counts(totals, &tables, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn multinomial_conserves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [0u64, 1, 5, 1000] {
            let c = multinomial(n, &[0.2, 0.0, 0.5, 0.3], &mut rng);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[1], 0);
        }
    }

    #[test]
    fn multinomial_trailing_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = multinomial(50, &[0.5, 0.5, 0.0, 0.0], &mut rng);
        assert_eq!(c[0] + c[1], 50);
    }
}
