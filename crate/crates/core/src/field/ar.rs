use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Lag-one correlation `exp(-theta * delta)`.
pub fn ar_coefficient(theta: f64, delta: f64) -> f64 {
    (-theta * delta).exp()
}

/// Log density of the whitened slices under the first-order autoregression,
/// with its gradient in the slices and in `theta`.
#[derive(Clone, Debug)]
pub struct ArPrior {
    pub value: f64,
    pub grad_gamma: Vec<f64>,
    pub d_theta: f64,
}

/// `gamma` holds `gaps.len() + 1` slices of `m` values each, slice-major.
///
/// The first slice is standard normal; slice `t` given slice `t-1` is normal
/// with mean `a_t * gamma_{t-1}` and variance `1 - a_t^2` per component.
pub fn ar_prior_logdensity(gamma: &[f64], m: usize, theta: f64, gaps: &[f64]) -> Result<ArPrior> {
    let n_t = gaps.len() + 1;
    if gamma.len() != n_t * m {
        return Err(Error::DimensionMismatch(format!(
            "latent vector has {} entries, expected {n_t} slices of {m}",
            gamma.len()
        )));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::DegenerateAr(format!(
            "theta = {theta} must be finite and non-negative"
        )));
    }
    if n_t > 1 && theta == 0.0 {
        return Err(Error::DegenerateAr(
            "theta = 0 makes consecutive slices identical".into(),
        ));
    }
    let mf = m as f64;
    let mut grad = vec![0.0; gamma.len()];
    let first = &gamma[..m];
    let mut value = -0.5 * mf * (2.0 * PI).ln() - 0.5 * first.iter().map(|g| g * g).sum::<f64>();
    for (g, x) in grad[..m].iter_mut().zip(first) {
        *g = -x;
    }
    let mut d_theta = 0.0;
    for (t, &delta) in gaps.iter().enumerate() {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::DegenerateAr(format!(
                "time gap {delta} must be positive"
            )));
        }
        let a = ar_coefficient(theta, delta);
        let v = -(-2.0 * theta * delta).exp_m1();
        if v.is_nan() || v <= 0.0 {
            return Err(Error::DegenerateAr(format!(
                "innovation variance underflows at theta = {theta}, gap = {delta}"
            )));
        }
        let prev = &gamma[t * m..(t + 1) * m];
        let cur = &gamma[(t + 1) * m..(t + 2) * m];
        let mut rr = 0.0;
        let mut rp = 0.0;
        for k in 0..m {
            let r = cur[k] - a * prev[k];
            rr += r * r;
            rp += r * prev[k];
            grad[(t + 1) * m + k] -= r / v;
            grad[t * m + k] += a * r / v;
        }
        value += -0.5 * mf * (2.0 * PI * v).ln() - rr / (2.0 * v);
        let d_a = mf * a / v + rp / v - a * rr / (v * v);
        d_theta += d_a * (-delta * a);
    }
    Ok(ArPrior {
        value,
        grad_gamma: grad,
        d_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn sample(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| ((k as f64 + 0.5) * 1.37).sin() * 1.3)
            .collect()
    }

    #[test]
    fn single_slice_is_standard_normal() {
        let g = [0.5, -1.0];
        let p = ar_prior_logdensity(&g, 2, 0.0, &[]).unwrap();
        let expected = -(2.0 * PI).ln() - 0.5 * 1.25;
        assert!((p.value - expected).abs() < 1e-14);
        assert_eq!(p.grad_gamma, vec![-0.5, 1.0]);
    }

    #[test]
    fn matches_dense_gaussian() {
        // per component the three slices are jointly normal with covariance a^{|s-t|}
        let theta = 0.7;
        let gaps = [1.0, 1.0];
        let m = 3;
        let g = sample(9);
        let p = ar_prior_logdensity(&g, m, theta, &gaps).unwrap();
        let a = ar_coefficient(theta, 1.0);
        let cov = DMatrix::from_fn(3, 3, |i, j| a.powi((i as i32 - j as i32).abs()));
        let chol = cov.clone().cholesky().unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut dense = 0.0;
        for k in 0..m {
            let x = DVector::from_vec((0..3).map(|t| g[t * m + k]).collect());
            let q = x.dot(&chol.solve(&x));
            dense += -1.5 * (2.0 * PI).ln() - 0.5 * logdet - 0.5 * q;
        }
        assert!((p.value - dense).abs() < 1e-12, "{} vs {dense}", p.value);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let gaps = [0.5, 1.5, 1.0];
        let m = 2;
        let g = sample(8);
        let theta = 0.9;
        let p = ar_prior_logdensity(&g, m, theta, &gaps).unwrap();
        let h = 1e-6;
        for k in 0..g.len() {
            let mut up = g.clone();
            let mut dn = g.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (ar_prior_logdensity(&up, m, theta, &gaps).unwrap().value
                - ar_prior_logdensity(&dn, m, theta, &gaps).unwrap().value)
                / (2.0 * h);
            assert!((fd - p.grad_gamma[k]).abs() < 1e-6);
        }
        let fd = (ar_prior_logdensity(&g, m, theta + h, &gaps).unwrap().value
            - ar_prior_logdensity(&g, m, theta - h, &gaps).unwrap().value)
            / (2.0 * h);
        assert!((fd - p.d_theta).abs() < 1e-5, "{fd} vs {}", p.d_theta);
    }

    #[test]
    fn degenerate_cases() {
        assert!(matches!(
            ar_prior_logdensity(&[0.0; 4], 2, 0.0, &[1.0]),
            Err(Error::DegenerateAr(_))
        ));
        assert!(ar_prior_logdensity(&[0.0; 4], 2, 1.0, &[0.0]).is_err());
        assert!(matches!(
            ar_prior_logdensity(&[0.0; 3], 2, 1.0, &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn large_theta_decouples_slices() {
        let g = sample(4);
        let p = ar_prior_logdensity(&g, 2, 50.0, &[1.0]).unwrap();
        let iid = -2.0 * (2.0 * PI).ln() - 0.5 * g.iter().map(|x| x * x).sum::<f64>();
        assert!((p.value - iid).abs() < 1e-12);
    }
}
