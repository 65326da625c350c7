use super::target::{evaluate, LatentState, Layout, TargetEval};
use super::ModelSpec;
use crate::error::Result;
use crate::field::Fft2;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A state together with its evaluated log target and flat gradient.
#[derive(Clone, Debug)]
pub struct ChainPoint {
    pub state: LatentState,
    pub eval: TargetEval,
    pub grad: Vec<f64>,
}

impl ChainPoint {
    pub fn new(
        spec: &ModelSpec,
        layout: &Layout,
        state: LatentState,
        counts: &[Vec<f64>],
        exposure: &[Vec<f64>],
        fft: Option<Arc<Fft2>>,
    ) -> Result<Self> {
        let eval = evaluate(spec, &state, counts, exposure, fft)?;
        let grad = layout.pack_gradient(&eval.grad);
        Ok(ChainPoint { state, eval, grad })
    }
}

/// Step size and diagonal preconditioner (a variance per flat coordinate).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub step: f64,
    pub precond: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    pub accept_prob: f64,
    /// The proposal could not be evaluated (overflow, lost spectral mass, ...).
    pub invalid_proposal: bool,
}

fn log_q(to: &[f64], from: &[f64], grad_from: &[f64], tuning: &Tuning) -> f64 {
    let h2 = tuning.step * tuning.step;
    let mut acc = 0.0;
    for k in 0..to.len() {
        let m = tuning.precond[k];
        let mean = from[k] + 0.5 * h2 * m * grad_from[k];
        let d = to[k] - mean;
        acc += d * d / m;
    }
    -acc / (2.0 * h2)
}

/// One Metropolis-adjusted Langevin update of all free coordinates.
#[allow(clippy::too_many_arguments)]
pub fn mala_step(
    spec: &ModelSpec,
    layout: &Layout,
    current: &ChainPoint,
    counts: &[Vec<f64>],
    exposure: &[Vec<f64>],
    tuning: &Tuning,
    fft: Option<Arc<Fft2>>,
    rng: &mut dyn RngCore,
) -> (Option<ChainPoint>, StepInfo) {
    let x = layout.pack(&current.state);
    let h = tuning.step;
    let h2 = h * h;
    let prop: Vec<f64> = (0..x.len())
        .map(|k| {
            let m = tuning.precond[k];
            let z: f64 = rng.sample(StandardNormal);
            x[k] + 0.5 * h2 * m * current.grad[k] + h * m.sqrt() * z
        })
        .collect();
    let u: f64 = rng.random();
    let state = layout.unpack(&prop, &current.state);
    let cand = match ChainPoint::new(spec, layout, state, counts, exposure, fft) {
        Ok(c) => c,
        Err(_) => {
            return (
                None,
                StepInfo {
                    accepted: false,
                    accept_prob: 0.0,
                    invalid_proposal: true,
                },
            )
        }
    };
    let log_alpha = cand.eval.value - current.eval.value + log_q(&x, &prop, &cand.grad, tuning)
        - log_q(&prop, &x, &current.grad, tuning);
    let accept_prob = if log_alpha.is_nan() {
        0.0
    } else {
        log_alpha.min(0.0).exp()
    };
    if u < accept_prob {
        (
            Some(cand),
            StepInfo {
                accepted: true,
                accept_prob,
                invalid_proposal: false,
            },
        )
    } else {
        (
            None,
            StepInfo {
                accepted: false,
                accept_prob,
                invalid_proposal: false,
            },
        )
    }
}

/// Robbins–Monro adaptation of the step size towards a target acceptance
/// rate, plus running-variance adaptation of the preconditioner for the
/// non-field coordinates. Only applied during burn-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub target: f64,
    pub iter: u64,
    n_gamma: usize,
    initial: Vec<f64>,
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Adaptation {
    pub fn new(target: f64, n_gamma: usize, tuning: &Tuning) -> Self {
        let tail = tuning.precond[n_gamma..].to_vec();
        Adaptation {
            target,
            iter: 0,
            n_gamma,
            count: 0,
            mean: vec![0.0; tail.len()],
            m2: vec![0.0; tail.len()],
            initial: tail,
        }
    }

    pub fn update(&mut self, tuning: &mut Tuning, info: &StepInfo, x: &[f64]) {
        self.iter += 1;
        let gain = 1.0 / (self.iter as f64 + 10.0).powf(0.6);
        let log_step = tuning.step.ln() + gain * (info.accept_prob - self.target);
        tuning.step = log_step.clamp(-12.0, 2.0).exp();

        self.count += 1;
        let c = self.count as f64;
        for (k, v) in x[self.n_gamma..].iter().enumerate() {
            let d = v - self.mean[k];
            self.mean[k] += d / c;
            self.m2[k] += d * (v - self.mean[k]);
        }
        if self.count >= 50 && self.count.is_multiple_of(25) && !self.mean.is_empty() {
            let w0 = 20.0;
            for k in 0..self.mean.len() {
                let var = self.m2[k] / (c - 1.0);
                let blended = (c * var + w0 * self.initial[k]) / (c + w0);
                tuning.precond[self.n_gamma + k] = blended.max(1e-10);
            }
        }
    }
}
