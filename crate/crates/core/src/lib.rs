//! Bayesian inference for Gibbs random fields with exact and noisy MCMC.
//!
//! The crate is organised around the pieces of the workflow:
//!
//! - [`models`]: Ising lattices and ERGMs as exponential families with a Gaussian prior.
//! - [`oracle`]: exact partition functions, moments and grid posteriors for small instances.
//! - [`samplers`]: Gibbs auxiliary simulation and the exact M-H, exchange, noisy exchange,
//!   noisy Langevin, MALA-exchange and noisy MALA-exchange kernels.
//! - [`tuning`]: Robbins-Monro MAP search and curvature-based step matrices.
//! - [`bounds`]: finite-state kernel perturbation bounds and their numerical verification.
//! - [`diagnostics`], [`io`] and [`study`]: trace summaries, file formats and experiment drivers.

pub mod bounds;
pub mod diagnostics;
pub mod error;
pub mod io;
pub(crate) mod numeric;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod samplers;
pub mod study;
pub mod tuning;

pub use error::{GrfError, Result};
pub use models::{GaussianPrior, GrfModel, GrfState, ParamVec, SuffStats};
