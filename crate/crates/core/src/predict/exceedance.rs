use crate::error::{Error, Result};
use crate::inference::ChainOutput;
use serde::{Deserialize, Serialize};

/// Posterior exceedance probabilities of the relative risk `exp(Y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceMap {
    pub n_cells: usize,
    pub n_times: usize,
    pub n_samples: usize,
    pub thresholds: Vec<f64>,
    /// `prob[k][t * n_cells + j] = P(exp(Y_tj) > thresholds[k])`.
    pub prob: Vec<Vec<f64>>,
    pub mean_y: Vec<f64>,
    pub mean_exp_y: Vec<f64>,
}

impl ExceedanceMap {
    pub fn probability(&self, k: usize, t: usize, j: usize) -> f64 {
        self.prob[k][t * self.n_cells + j]
    }

    /// Slice `t` of the map for threshold `k`.
    pub fn slice(&self, k: usize, t: usize) -> &[f64] {
        &self.prob[k][t * self.n_cells..(t + 1) * self.n_cells]
    }
}

/// Empirical frequency of `exp(Y_tj) > c` across retained samples.
pub fn exceedance(chain: &ChainOutput, thresholds: &[f64]) -> Result<ExceedanceMap> {
    if chain.samples.is_empty() {
        return Err(Error::EmptyChain("no retained samples".into()));
    }
    if let Some(c) = thresholds.iter().find(|c| c.is_nan()) {
        return Err(Error::Validation(format!("threshold {c} is not a number")));
    }
    let len = chain.n_cells * chain.n_times;
    let ns = chain.samples.len() as f64;
    let mut counts = vec![vec![0u64; len]; thresholds.len()];
    let mut mean_y = vec![0.0; len];
    let mut mean_exp_y = vec![0.0; len];
    for s in &chain.samples {
        for (k, &y) in s.y.iter().enumerate() {
            let r = y.exp();
            mean_y[k] += y;
            mean_exp_y[k] += r;
            for (c, row) in thresholds.iter().zip(counts.iter_mut()) {
                if r > *c {
                    row[k] += 1;
                }
            }
        }
    }
    mean_y.iter_mut().for_each(|v| *v /= ns);
    mean_exp_y.iter_mut().for_each(|v| *v /= ns);
    Ok(ExceedanceMap {
        n_cells: chain.n_cells,
        n_times: chain.n_times,
        n_samples: chain.samples.len(),
        thresholds: thresholds.to_vec(),
        prob: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / ns).collect())
            .collect(),
        mean_y,
        mean_exp_y,
    })
}
