//! The sampler ladder: exact M-H, exchange, noisy exchange, noisy Langevin,
//! MALA-exchange and noisy MALA-exchange, all built on single-site Gibbs
//! auxiliary simulation.

mod chain;
mod gibbs;
mod steps;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};
use crate::models::{ParamVec, SuffStats};

pub use chain::{run_chain, Trace, TraceMeta};
pub use gibbs::{conditional_on_probability, draw_auxiliary, draw_auxiliary_stats, gibbs_site_update, gibbs_sweeps};
pub use steps::{
    exchange_log_alpha, grad_from_expected, grad_log_posterior_estimate, langevin_update, log_ratio_estimate,
    mala_log_alpha, noisy_exchange_log_alpha, Sampler,
};

/// Iteration or wall-clock budget for a chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Iterations(usize),
    Seconds(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of auxiliary draws `N` per iteration (noisy variants and gradient estimates).
    pub n_aux: usize,
    pub aux_burnin: usize,
    pub aux_thin: usize,
    /// Langevin/MALA step matrix, row-major.
    pub step_matrix: Option<Vec<Vec<f64>>>,
    /// Random-walk proposal SD for exact M-H and the exchange variants.
    pub rw_scale: f64,
    pub seed: u64,
    pub budget: Budget,
    /// Starting point; the prior mean when absent.
    pub initial_theta: Option<Vec<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_aux: 1,
            aux_burnin: 1000,
            aux_thin: 4,
            step_matrix: None,
            rw_scale: 0.1,
            seed: 0,
            budget: Budget::Iterations(1000),
            initial_theta: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_aux == 0 {
            return Err(GrfError::Config("n_aux must be at least 1".into()));
        }
        if !(self.rw_scale > 0.0 && self.rw_scale.is_finite()) {
            return Err(GrfError::Config("rw_scale must be positive and finite".into()));
        }
        match self.budget {
            Budget::Seconds(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(GrfError::Config("a wall-clock budget must be positive".into()))
            }
            _ => {}
        }
        if let Some(theta) = &self.initial_theta {
            if theta.len() != dim || theta.iter().any(|t| !t.is_finite()) {
                return Err(GrfError::Config(format!("initial_theta must hold {dim} finite values")));
            }
        }
        if let Some(rows) = &self.step_matrix {
            StepMatrix::from_rows(rows, dim)?;
        }
        Ok(())
    }

    /// The step matrix `Sigma`, required by the gradient-based kernels.
    pub fn step(&self, dim: usize) -> Result<StepMatrix> {
        match &self.step_matrix {
            Some(rows) => StepMatrix::from_rows(rows, dim),
            None => Err(GrfError::Config("this algorithm needs a step_matrix".into())),
        }
    }

    pub fn with_step_matrix(mut self, sigma: &DMatrix<f64>) -> Self {
        self.step_matrix = Some(sigma.row_iter().map(|r| r.iter().copied().collect()).collect());
        self
    }
}

/// Symmetric positive definite step matrix with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct StepMatrix {
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl StepMatrix {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let m = sigma.nrows();
        if m == 0 || sigma.ncols() != m {
            return Err(GrfError::Config("step matrix must be square and non-empty".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(GrfError::Config("step matrix has non-finite entries".into()));
        }
        let scale = sigma.amax();
        for i in 0..m {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(GrfError::Config("step matrix is not symmetric".into()));
                }
            }
        }
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        let chol = Cholesky::new(sigma.clone());
        match chol {
            Some(chol) if min_eig > 0.0 => Ok(Self { sigma, chol }),
            _ => Err(GrfError::Config(format!(
                "step matrix is not positive definite (smallest eigenvalue {min_eig:e})"
            ))),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(GrfError::Config(format!("step matrix must be {dim}x{dim}")));
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    /// `sigma^2 I`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(dim, dim, variance))
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Spectral norm `||Sigma||`.
    pub fn norm(&self) -> f64 {
        self.sigma.clone().symmetric_eigenvalues().amax()
    }

    /// `theta + (Sigma/2) grad`.
    pub fn drift_mean(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        let g = DVector::from_column_slice(grad);
        let drift = &self.sigma * g * 0.5;
        theta.iter().zip(drift.iter()).map(|(t, d)| t + d).collect()
    }

    /// `L z` with `z` standard normal, so the result is `N(0, Sigma)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (self.chol.l() * z).iter().copied().collect()
    }

    /// `-1/2 (x - mean)' Sigma^{-1} (x - mean)`; the normalising constant cancels in every ratio.
    pub fn log_kernel(&self, x: &[f64], mean: &[f64]) -> f64 {
        let d = DVector::from_iterator(self.dim(), x.iter().zip(mean).map(|(a, b)| a - b));
        let solved = self.chol.solve(&d);
        -0.5 * d.dot(&solved)
    }
}

/// Current chain position with the caches carried by the MALA-exchange kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub theta: ParamVec,
    pub cached_grad: Option<Vec<f64>>,
    pub cached_aux: Option<Vec<SuffStats>>,
}

impl ChainState {
    pub fn new(theta: impl Into<ParamVec>) -> Self {
        Self {
            theta: theta.into(),
            cached_grad: None,
            cached_aux: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    ExactMh,
    Exchange,
    NoisyExchange,
    NoisyLangevin,
    MalaExchange,
    NoisyMalaExchange,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::ExactMh,
        Algorithm::Exchange,
        Algorithm::NoisyExchange,
        Algorithm::NoisyLangevin,
        Algorithm::MalaExchange,
        Algorithm::NoisyMalaExchange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ExactMh => "exact-mh",
            Algorithm::Exchange => "exchange",
            Algorithm::NoisyExchange => "noisy-exchange",
            Algorithm::NoisyLangevin => "noisy-langevin",
            Algorithm::MalaExchange => "mala-exchange",
            Algorithm::NoisyMalaExchange => "noisy-mala-exchange",
        }
    }

    /// Whether the kernel leaves the exact posterior invariant.
    pub fn is_exact(self) -> bool {
        matches!(self, Algorithm::ExactMh | Algorithm::Exchange | Algorithm::MalaExchange)
    }

    pub fn needs_step_matrix(self) -> bool {
        matches!(
            self,
            Algorithm::NoisyLangevin | Algorithm::MalaExchange | Algorithm::NoisyMalaExchange
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = GrfError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                GrfError::Config(format!("unknown algorithm '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!(matches!("gibbs".parse::<Algorithm>(), Err(GrfError::Config(_))));
    }

    #[test]
    fn config_defaults_and_json() {
        let c: SamplerConfig = serde_json::from_str(r#"{"n_aux": 50, "budget": {"iterations": 10}}"#).unwrap();
        assert_eq!(c.n_aux, 50);
        assert_eq!(c.aux_burnin, 1000);
        assert_eq!(c.aux_thin, 4);
        assert_eq!(c.budget, Budget::Iterations(10));
        let s: SamplerConfig = serde_json::from_str(r#"{"budget": {"seconds": 30.0}}"#).unwrap();
        assert_eq!(s.budget, Budget::Seconds(30.0));
        assert!(serde_json::from_str::<SamplerConfig>(r#"{"n_axu": 3}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate(1).is_ok());
        let bad = [
            SamplerConfig { n_aux: 0, ..Default::default() },
            SamplerConfig { rw_scale: 0.0, ..Default::default() },
            SamplerConfig { budget: Budget::Seconds(0.0), ..Default::default() },
            SamplerConfig { initial_theta: Some(vec![0.0, 1.0]), ..Default::default() },
            SamplerConfig { step_matrix: Some(vec![vec![-1.0]]), ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(1), Err(GrfError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn step_matrix_rejects_indefinite_and_asymmetric() {
        assert!(StepMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(StepMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(StepMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).is_ok());
    }

    #[test]
    fn step_matrix_noise_has_the_right_covariance() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let step = StepMatrix::new(sigma.clone()).unwrap();
        let mut rng = seeded(5);
        let n = 200_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let z = step.sample_noise(&mut rng);
            let v = DVector::from_vec(z);
            acc += &v * v.transpose();
        }
        acc /= n as f64;
        assert!((acc - sigma).amax() < 0.03);
    }

    #[test]
    fn log_kernel_matches_closed_form() {
        let step = StepMatrix::isotropic(2, 0.25).unwrap();
        let v = step.log_kernel(&[1.0, 0.5], &[0.0, 0.0]);
        assert!((v + 0.5 * (1.0 + 0.25) / 0.25).abs() < 1e-14);
        assert_eq!(step.drift_mean(&[1.0, 1.0], &[2.0, -4.0]), vec![1.25, 0.5]);
        assert!((step.norm() - 0.25).abs() < 1e-15);
    }
}
