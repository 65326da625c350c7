use crate::error::{Error, Result};
use crate::inference::{ChainOutput, ModelSpec};
use rand::RngCore;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// One Poisson cell-count draw per retained sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraws {
    pub n_cells: usize,
    pub n_times: usize,
    /// `counts[s][t * n_cells + j]`.
    pub counts: Vec<Vec<u64>>,
}

impl PredictiveDraws {
    pub fn n_samples(&self) -> usize {
        self.counts.len()
    }

    /// Cell counts of slice `t` for every sample, as reals.
    pub fn slice(&self, t: usize) -> Vec<Vec<f64>> {
        let n = self.n_cells;
        self.counts
            .iter()
            .map(|c| c[t * n..(t + 1) * n].iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let len = self.n_cells * self.n_times;
        let mut m = vec![0.0; len];
        for c in &self.counts {
            for (a, &v) in m.iter_mut().zip(c) {
                *a += v as f64;
            }
        }
        let ns = self.counts.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= ns);
        m
    }
}

/// Draws `N_tj ~ Poisson(C_A λ_tj exp(Z_tj β + Y_tj))` for every retained
/// sample, over the whole of every cell.
pub fn predictive_counts(
    chain: &ChainOutput,
    spec: &ModelSpec,
    rng: &mut dyn RngCore,
) -> Result<PredictiveDraws> {
    if chain.samples.is_empty() {
        return Err(Error::EmptyChain("no retained samples".into()));
    }
    if chain.n_cells != spec.n_cells() || chain.n_times != spec.n_times() {
        return Err(Error::DimensionMismatch(format!(
            "chain has {} cells x {} times, prediction frame {} x {}",
            chain.n_cells,
            chain.n_times,
            spec.n_cells(),
            spec.n_times()
        )));
    }
    let n = spec.n_cells();
    let mut out = Vec::with_capacity(chain.samples.len());
    for s in &chain.samples {
        if s.beta.len() != spec.n_beta() {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} coefficients, model {}",
                s.beta.len(),
                spec.n_beta()
            )));
        }
        let mut counts = Vec::with_capacity(n * spec.n_times());
        for t in 0..spec.n_times() {
            let eta = spec.linear_predictor(t, &s.beta);
            for (j, e) in eta.iter().enumerate().take(n) {
                let mu = spec.cell_area() * spec.offset(t, j) * (e + s.y[t * n + j]).exp();
                let c = if mu > 0.0 {
                    Poisson::new(mu)
                        .map_err(|_| Error::NonFinite { cell: j, time: t })?
                        .sample(rng) as u64
                } else {
                    0
                };
                counts.push(c);
            }
        }
        out.push(counts);
    }
    Ok(PredictiveDraws {
        n_cells: n,
        n_times: spec.n_times(),
        counts: out,
    })
}
