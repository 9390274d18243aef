use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};

/// Independent Gaussian prior on each parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianPrior {
    pub const DEFAULT_VARIANCE: f64 = 100.0;

    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(GrfError::invalid("prior mean and variance must have the same non-zero length"));
        }
        if variance.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(GrfError::invalid("prior variances must be positive and finite"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(GrfError::invalid("prior means must be finite"));
        }
        Ok(Self { mean, variance })
    }

    /// Zero-mean prior with a shared variance.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![variance; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `-1/2 sum (theta_k - mu_k)^2 / sigma_k^2`, i.e. the log density up to its constant.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        theta
            .iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((t, m), v)| -0.5 * (t - m) * (t - m) / v)
            .sum()
    }

    /// Normalised log density, used where absolute prior values matter (grid posteriors).
    pub fn log_density_normalized(&self, theta: &[f64]) -> f64 {
        let log_norm: f64 = self
            .variance
            .iter()
            .map(|v| -0.5 * (2.0 * std::f64::consts::PI * v).ln())
            .sum();
        self.log_density(theta) + log_norm
    }

    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((t, m), v)| -(t - m) / v)
            .collect()
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.variance.iter().map(|v| -1.0 / v),
        ))
    }
}

/// Log density (up to a constant), gradient and Hessian of the prior at `theta`.
pub fn prior_log_grad_hess(prior: &GaussianPrior, theta: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    if theta.len() != prior.dim() {
        return Err(GrfError::invalid(format!(
            "theta has length {}, prior has dimension {}",
            theta.len(),
            prior.dim()
        )));
    }
    Ok((prior.log_density(theta), prior.grad(theta), prior.hessian()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let prior = GaussianPrior::isotropic(1, 100.0).unwrap();
        let (lp, g, h) = prior_log_grad_hess(&prior, &[10.0]).unwrap();
        assert!((lp + 0.5).abs() < 1e-15);
        assert!((g[0] + 0.1).abs() < 1e-15);
        assert!((h[(0, 0)] + 0.01).abs() < 1e-15);

        let shifted = GaussianPrior::new(vec![1.0, -2.0], vec![3.0, 0.5]).unwrap();
        assert_eq!(shifted.grad(&[1.0, -2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn finite_difference_gradient() {
        let prior = GaussianPrior::new(vec![0.3, -1.0, 2.0], vec![2.0, 100.0, 0.7]).unwrap();
        let theta = [1.7, 4.2, -0.9];
        let g = prior.grad(&theta);
        let h = 1e-5;
        for k in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fd = (prior.log_density(&up) - prior.log_density(&dn)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn rejects_bad_priors() {
        assert!(GaussianPrior::new(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianPrior::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(prior_log_grad_hess(&GaussianPrior::isotropic(2, 1.0).unwrap(), &[1.0]).is_err());
    }
}
