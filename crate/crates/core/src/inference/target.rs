use super::ModelSpec;
use crate::error::{Error, Result};
use crate::field::{ar_prior_logdensity, CovarianceParams, Exponential, Fft2, SpectralOperator};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Sampler coordinates: whitened slices, coefficients and log covariance parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// `Γ_t` on the extended grid, slice-major.
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_sigma: f64,
    pub log_phi: f64,
    pub log_theta: f64,
}

impl LatentState {
    /// Zero field, covariance parameters at their prior centres and
    /// coefficients at their prior centres except a free intercept, which
    /// starts at the crude rate `ln(total events / total exposure)`.
    pub fn initial(spec: &ModelSpec, total_events: f64, exposure: &[Vec<f64>]) -> Self {
        let priors = &spec.priors;
        let mut beta: Vec<f64> = priors.beta.iter().map(|p| p.centre()).collect();
        let total_exposure: f64 = exposure.iter().flatten().sum();
        if !priors.beta[0].is_fixed() && total_events > 0.0 && total_exposure > 0.0 {
            beta[0] = (total_events / total_exposure).ln();
        }
        LatentState {
            gamma: vec![0.0; spec.n_times() * spec.grid.n_extended()],
            beta,
            log_sigma: priors.log_sigma.centre(),
            log_phi: priors.log_phi.centre(),
            log_theta: priors.log_theta.centre(),
        }
    }

    pub fn params(&self) -> CovarianceParams {
        CovarianceParams {
            sigma: self.log_sigma.exp(),
            phi: self.log_phi.exp(),
            theta: self.log_theta.exp(),
        }
    }
}

/// Gradient of the log target in every coordinate of [`LatentState`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateGradient {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_sigma: f64,
    pub log_phi: f64,
    pub log_theta: f64,
}

#[derive(Clone, Debug)]
pub struct TargetEval {
    pub value: f64,
    pub log_likelihood: f64,
    pub grad: StateGradient,
    /// `Y_t` on the observation cells, slice-major.
    pub y: Vec<Vec<f64>>,
    pub truncated: usize,
}

/// Log posterior of the state given cell counts.
///
/// The likelihood is `sum_tj N_tj ln μ_tj - μ_tj` with
/// `μ_tj = exposure_tj · exp(Z_tj β + Y_tj)` (the `ln N!` terms are dropped);
/// cells with zero exposure carry no information and are skipped. Priors:
/// the autoregressive prior on `Γ` and the configured priors on `β` and the
/// log covariance parameters.
pub fn log_target(
    spec: &ModelSpec,
    state: &LatentState,
    counts: &[Vec<f64>],
    exposure: &[Vec<f64>],
) -> Result<TargetEval> {
    evaluate(spec, state, counts, exposure, None)
}

pub(crate) fn evaluate(
    spec: &ModelSpec,
    state: &LatentState,
    counts: &[Vec<f64>],
    exposure: &[Vec<f64>],
    fft: Option<Arc<Fft2>>,
) -> Result<TargetEval> {
    let n_t = spec.n_times();
    let n = spec.n_cells();
    let n_ext = spec.grid.n_extended();
    if state.gamma.len() != n_t * n_ext {
        return Err(Error::DimensionMismatch(format!(
            "latent field has {} entries, expected {} slices of {n_ext}",
            state.gamma.len(),
            n_t
        )));
    }
    if state.beta.len() != spec.n_beta() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a model with {}",
            state.beta.len(),
            spec.n_beta()
        )));
    }
    if counts.len() != n_t || exposure.len() != n_t {
        return Err(Error::DimensionMismatch(format!(
            "counts/exposure need {n_t} slices, got {}/{}",
            counts.len(),
            exposure.len()
        )));
    }
    let sigma = state.log_sigma.exp();
    let phi = state.log_phi.exp();
    let theta = state.log_theta.exp();
    let op = SpectralOperator::build(&spec.grid, phi, &Exponential, fft)?;

    let mut ll = 0.0;
    let mut g_beta = vec![0.0; spec.n_beta()];
    let mut g_log_sigma = 0.0;
    let mut g_log_phi = 0.0;
    let mut g_gamma = Vec::with_capacity(state.gamma.len());
    let mut ys = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let st = op.transform_slice(&state.gamma[t * n_ext..(t + 1) * n_ext], sigma)?;
        let zb = spec.linear_predictor(t, &state.beta);
        let mut resid = vec![0.0; n];
        for j in 0..n {
            let ex = exposure[t][j];
            let nn = counts[t][j];
            if ex <= 0.0 {
                if nn > 0.0 {
                    return Err(Error::NonFinite { cell: j, time: t });
                }
                continue;
            }
            let eta = zb[j] + st.y[j];
            let mu = ex * eta.exp();
            if !mu.is_finite() || !eta.is_finite() {
                return Err(Error::NonFinite { cell: j, time: t });
            }
            ll += nn * (ex.ln() + eta) - mu;
            let r = nn - mu;
            resid[j] = r;
            for (k, g) in g_beta.iter_mut().enumerate() {
                *g += r * spec.design(t, j, k);
            }
            g_log_sigma += r * sigma * (st.unit[j] - sigma);
            g_log_phi += r * st.dy_dlog_phi[j];
        }
        g_gamma.extend(op.pullback(&resid, sigma)?);
        ys.push(st.y);
    }
    if !ll.is_finite() {
        return Err(Error::NonFinite { cell: 0, time: 0 });
    }

    let gaps = spec.grid.time_gaps();
    let ar = ar_prior_logdensity(&state.gamma, n_ext, theta, &gaps)?;
    let mut value = ll + ar.value;
    for (g, a) in g_gamma.iter_mut().zip(&ar.grad_gamma) {
        *g += a;
    }
    for (k, p) in spec.priors.beta.iter().enumerate() {
        let (v, d) = p.log_density(state.beta[k]);
        value += v;
        g_beta[k] += d;
    }
    let (v, d) = spec.priors.log_sigma.log_density(state.log_sigma);
    value += v;
    g_log_sigma += d;
    let (v, d) = spec.priors.log_phi.log_density(state.log_phi);
    value += v;
    g_log_phi += d;
    let mut g_log_theta = 0.0;
    if n_t > 1 {
        let (v, d) = spec.priors.log_theta.log_density(state.log_theta);
        value += v;
        g_log_theta = ar.d_theta * theta + d;
    }
    Ok(TargetEval {
        value,
        log_likelihood: ll,
        grad: StateGradient {
            gamma: g_gamma,
            beta: g_beta,
            log_sigma: g_log_sigma,
            log_phi: g_log_phi,
            log_theta: g_log_theta,
        },
        y: ys,
        truncated: op.truncated_count(),
    })
}

/// Which coordinates of the state are sampled, and their order in the flat vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub n_gamma: usize,
    pub beta_free: Vec<usize>,
    pub sigma_free: bool,
    pub phi_free: bool,
    pub theta_free: bool,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Self {
        let p = &spec.priors;
        Layout {
            n_gamma: spec.n_times() * spec.grid.n_extended(),
            beta_free: (0..spec.n_beta())
                .filter(|&k| !p.beta[k].is_fixed())
                .collect(),
            sigma_free: !p.log_sigma.is_fixed(),
            phi_free: !p.log_phi.is_fixed(),
            theta_free: spec.n_times() > 1 && !p.log_theta.is_fixed(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_gamma
            + self.beta_free.len()
            + self.sigma_free as usize
            + self.phi_free as usize
            + self.theta_free as usize
    }

    fn scalars(&self) -> impl Iterator<Item = usize> + '_ {
        [self.sigma_free, self.phi_free, self.theta_free]
            .into_iter()
            .enumerate()
            .filter(|(_, f)| *f)
            .map(|(k, _)| k)
    }

    pub fn pack(&self, s: &LatentState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(&s.gamma);
        x.extend(self.beta_free.iter().map(|&k| s.beta[k]));
        let vals = [s.log_sigma, s.log_phi, s.log_theta];
        x.extend(self.scalars().map(|k| vals[k]));
        x
    }

    pub fn pack_gradient(&self, g: &StateGradient) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(&g.gamma);
        x.extend(self.beta_free.iter().map(|&k| g.beta[k]));
        let vals = [g.log_sigma, g.log_phi, g.log_theta];
        x.extend(self.scalars().map(|k| vals[k]));
        x
    }

    /// Rebuilds a state from `x`, taking fixed coordinates from `template`.
    pub fn unpack(&self, x: &[f64], template: &LatentState) -> LatentState {
        let mut s = template.clone();
        s.gamma.copy_from_slice(&x[..self.n_gamma]);
        let mut pos = self.n_gamma;
        for &k in &self.beta_free {
            s.beta[k] = x[pos];
            pos += 1;
        }
        for k in self.scalars() {
            match k {
                0 => s.log_sigma = x[pos],
                1 => s.log_phi = x[pos],
                _ => s.log_theta = x[pos],
            }
            pos += 1;
        }
        s
    }
}
