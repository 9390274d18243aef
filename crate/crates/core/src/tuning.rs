//! Robbins-Monro search for the posterior mode and curvature-based step matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};
use crate::models::{GrfModel, GrfState, ParamVec};
use crate::rng::chain_rng;
use crate::samplers::{draw_auxiliary_stats, grad_from_expected, Algorithm, Budget, Sampler, SamplerConfig, StepMatrix};

/// Step sizes `eps_n = a / (b + n)` with a stopping rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmSchedule {
    pub a: f64,
    pub b: f64,
    /// Convergence threshold on `|theta_{n+1} - theta_n|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive sub-`tol` steps required before stopping; a single small noisy step is not enough.
    pub patience: usize,
    /// Iterates leaving this ball count as divergence.
    pub divergence_radius: f64,
}

impl Default for RmSchedule {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 10.0,
            tol: 1e-3,
            max_iter: 20_000,
            patience: 50,
            divergence_radius: 100.0,
        }
    }
}

impl RmSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.a) && positive(self.b) && positive(self.tol) && positive(self.divergence_radius)) {
            return Err(GrfError::Config("a, b, tol and divergence_radius must be positive".into()));
        }
        if self.max_iter == 0 || self.patience == 0 {
            return Err(GrfError::Config("max_iter and patience must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, n: usize) -> f64 {
        self.a / (self.b + n as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmOutcome {
    pub theta: ParamVec,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Robbins-Monro iteration `theta += eps_n * grad(theta)` for an arbitrary (possibly noisy) gradient.
pub fn robbins_monro_with<F>(theta0: &[f64], schedule: &RmSchedule, mut grad: F) -> Result<RmOutcome>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    schedule.validate()?;
    let mut theta = theta0.to_vec();
    let mut quiet = 0usize;
    for n in 0..schedule.max_iter {
        let g = grad(&theta);
        let eps = schedule.step_size(n);
        let step: Vec<f64> = g.iter().map(|v| eps * v).collect();
        theta.iter_mut().zip(&step).for_each(|(t, s)| *t += s);
        let size = norm(&step);
        if !size.is_finite() || norm(&theta) > schedule.divergence_radius || theta.iter().any(|t| !t.is_finite()) {
            return Err(GrfError::Diverged {
                iterations: n + 1,
                last: theta,
            });
        }
        quiet = if size < schedule.tol { quiet + 1 } else { 0 };
        if quiet >= schedule.patience {
            return Ok(RmOutcome {
                theta: ParamVec(theta),
                iterations: n + 1,
                converged: true,
            });
        }
    }
    Ok(RmOutcome {
        theta: ParamVec(theta),
        iterations: schedule.max_iter,
        converged: false,
    })
}

/// Posterior mode by Robbins-Monro with a fresh `N = config.n_aux` gradient estimate at every step.
/// Starts from `config.initial_theta`, or the prior mean.
pub fn robbins_monro_map<R: Rng + ?Sized>(
    model: &GrfModel,
    y: &GrfState,
    schedule: &RmSchedule,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<RmOutcome> {
    config.validate(model.dim())?;
    let s_y = model.suff_stats(y)?;
    let theta0 = config.initial_theta.clone().unwrap_or_else(|| model.prior().mean.clone());
    let m = model.dim();
    robbins_monro_with(&theta0, schedule, |theta| {
        let aux = draw_auxiliary_stats(model, theta, config, config.n_aux, rng);
        let mut mean = vec![0.0; m];
        for s in &aux {
            mean.iter_mut().zip(s.iter()).for_each(|(acc, v)| *acc += v / aux.len() as f64);
        }
        grad_from_expected(model, &s_y, theta, &mean)
    })
}

/// Unbiased sample covariance of the rows of `samples`.
pub fn sample_covariance(samples: &[impl AsRef<[f64]>]) -> DMatrix<f64> {
    let n = samples.len();
    let m = samples.first().map_or(0, |s| s.as_ref().len());
    let mut mean = DVector::<f64>::zeros(m);
    for s in samples {
        mean += DVector::from_column_slice(s.as_ref());
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for s in samples {
        let d = DVector::from_column_slice(s.as_ref()) - &mean;
        cov += &d * d.transpose();
    }
    cov / (n as f64 - 1.0)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `-Cov(s(y*)) + prior Hessian` from `n_draws` auxiliary draws at `theta_star`.
pub fn estimate_log_posterior_hessian<R: Rng + ?Sized>(
    model: &GrfModel,
    y: &GrfState,
    theta_star: &[f64],
    n_draws: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_draws < 100 {
        return Err(GrfError::invalid("the Hessian estimate needs at least 100 draws"));
    }
    if theta_star.len() != model.dim() {
        return Err(GrfError::invalid("theta has the wrong dimension"));
    }
    model.check_state(y)?;
    let draws = draw_auxiliary_stats(model, theta_star, config, n_draws, rng);
    let cov = symmetrize(&sample_covariance(&draws));
    let eig = cov.clone().symmetric_eigenvalues();
    let scale = eig.amax();
    if eig.min() <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(GrfError::Singular(format!(
            "sample covariance of the statistics at {theta_star:?} has eigenvalues {:?}; \
             a statistic barely varies under the model",
            eig.as_slice()
        )));
    }
    Ok(symmetrize(&(model.prior().hessian() - cov)))
}

/// `Sigma = scale * (-hessian)^{-1}`, checked symmetric positive definite.
pub fn tune_step_matrix(hessian: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GrfError::Config("scale must be positive".into()));
    }
    if !hessian.is_square() || hessian.is_empty() {
        return Err(GrfError::invalid("hessian must be square"));
    }
    let neg = symmetrize(&(-hessian));
    let min_eig = neg.clone().symmetric_eigenvalues().min();
    let chol = match neg.clone().cholesky() {
        Some(c) if min_eig > 0.0 => c,
        _ => {
            return Err(GrfError::NotNegativeDefinite(format!(
                "largest eigenvalue of the Hessian is {:e}; use more draws or a tighter prior",
                -min_eig
            )))
        }
    };
    let sigma = symmetrize(&(chol.inverse() * scale));
    let sigma_min = sigma.clone().symmetric_eigenvalues().min();
    if sigma_min <= 1e-12 {
        return Err(GrfError::NotNegativeDefinite(format!(
            "step matrix has smallest eigenvalue {sigma_min:e}"
        )));
    }
    Ok(sigma)
}

/// Settings of the pilot-run scale search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSearch {
    pub algorithm: Algorithm,
    pub lo: f64,
    pub hi: f64,
    pub pilots: usize,
    pub pilot_iters: usize,
    pub target: f64,
}

impl Default for PilotSearch {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::MalaExchange,
            lo: 0.1,
            hi: 10.0,
            pilots: 5,
            pilot_iters: 2000,
            target: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotResult {
    pub scale: f64,
    pub acceptance: f64,
    /// Every `(scale, acceptance)` pilot in the order run.
    pub pilots: Vec<(f64, f64)>,
}

/// Bisection on `log(scale)`: acceptance falls as the scale grows. Returns the pilot closest
/// to the target rate. Pilot `i` runs on stream `i` of `config.seed`.
pub fn pilot_scale_search(
    model: &GrfModel,
    y: &GrfState,
    hessian: &DMatrix<f64>,
    config: &SamplerConfig,
    search: &PilotSearch,
) -> Result<PilotResult> {
    if !(search.lo > 0.0 && search.hi > search.lo) || search.pilots == 0 || search.pilot_iters == 0 {
        return Err(GrfError::Config("pilot search needs 0 < lo < hi and at least one pilot".into()));
    }
    let (mut lo, mut hi) = (search.lo.ln(), search.hi.ln());
    let mut pilots = Vec::with_capacity(search.pilots);
    for i in 0..search.pilots {
        let mid = 0.5 * (lo + hi);
        let scale = mid.exp();
        let step = StepMatrix::new(tune_step_matrix(hessian, scale)?)?;
        let pilot_config = SamplerConfig {
            budget: Budget::Iterations(search.pilot_iters),
            seed: crate::rng::stream_seed(config.seed, i as u64),
            ..config.clone()
        };
        let sampler = Sampler::new(model, y, pilot_config)?.with_step(step)?.prepare(search.algorithm)?;
        let mut rng = chain_rng(config.seed, i as u64);
        let rate = sampler.run(search.algorithm, &mut rng)?.acceptance_rate();
        pilots.push((scale, rate));
        if rate > search.target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let &(scale, acceptance) = pilots
        .iter()
        .min_by(|a, b| (a.1 - search.target).abs().total_cmp(&(b.1 - search.target).abs()))
        .expect("at least one pilot");
    Ok(PilotResult {
        scale,
        acceptance,
        pilots,
    })
}

/// Settings of the full tuning pipeline: mode, curvature, then step scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub schedule: RmSchedule,
    pub hessian_draws: usize,
    pub pilot: PilotSearch,
    /// Skips the pilot search when set.
    pub fixed_scale: Option<f64>,
    /// Auxiliary-draw settings; `n_aux` is the per-step gradient sample size.
    pub sampler: SamplerConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            schedule: RmSchedule::default(),
            hessian_draws: 1000,
            pilot: PilotSearch::default(),
            fixed_scale: None,
            sampler: SamplerConfig {
                n_aux: 20,
                ..SamplerConfig::default()
            },
        }
    }
}

/// Output of [`tune`], consumed by the gradient-based samplers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningArtifact {
    pub theta_star: Vec<f64>,
    pub rm_iterations: usize,
    pub rm_converged: bool,
    pub hessian: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub scale: f64,
    /// Pilot acceptance rate at `scale` (absent with a fixed scale).
    pub acceptance: Option<f64>,
}

impl TuningArtifact {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let m = self.sigma.len();
        DMatrix::from_fn(m, m, |i, j| self.sigma[i][j])
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Robbins-Monro mode on stream 0 of `seed`, Hessian on stream 1, pilots on stream 2.
pub fn tune(model: &GrfModel, y: &GrfState, config: &TuneConfig, seed: u64) -> Result<TuningArtifact> {
    let rm = robbins_monro_map(model, y, &config.schedule, &config.sampler, &mut chain_rng(seed, 0))?;
    let hessian = estimate_log_posterior_hessian(
        model,
        y,
        &rm.theta,
        config.hessian_draws,
        &config.sampler,
        &mut chain_rng(seed, 1),
    )?;
    let (scale, acceptance) = match config.fixed_scale {
        Some(s) => (s, None),
        None => {
            let pilot_config = SamplerConfig {
                seed: crate::rng::stream_seed(seed, 2),
                initial_theta: Some(rm.theta.0.clone()),
                ..config.sampler.clone()
            };
            let r = pilot_scale_search(model, y, &hessian, &pilot_config, &config.pilot)?;
            (r.scale, Some(r.acceptance))
        }
    };
    let sigma = tune_step_matrix(&hessian, scale)?;
    Ok(TuningArtifact {
        theta_star: rm.theta.0,
        rm_iterations: rm.iterations,
        rm_converged: rm.converged,
        hessian: rows(&hessian),
        sigma: rows(&sigma),
        scale,
        acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ErgmStat, GaussianPrior, StatSet, UndirectedGraph};
    use crate::oracle::EnumeratedModel;
    use crate::rng::seeded;

    #[test]
    fn quadratic_surrogate_converges() {
        // The stopping rule bounds the step, not the error: the error at the stop is roughly
        // tol * n / a, so the check uses a gain well above 1/curvature and a finer step tolerance.
        let schedule = RmSchedule { a: 3.0, tol: 1e-5, ..Default::default() };
        let out = robbins_monro_with(&[5.0], &schedule, |t| vec![-t[0]]).unwrap();
        assert!(out.converged);
        assert!(out.theta[0].abs() < 1e-3, "{:?}", out);
    }

    #[test]
    fn halved_gain_reaches_the_same_limit() {
        let mut rng = seeded(3);
        let mut noisy = |t: &[f64]| vec![-(t[0] - 1.5) + 0.1 * rng.random::<f64>() - 0.05];
        let full = robbins_monro_with(&[0.0], &RmSchedule { a: 4.0, ..Default::default() }, &mut noisy).unwrap();
        let half = robbins_monro_with(&[0.0], &RmSchedule { a: 2.0, ..Default::default() }, &mut noisy).unwrap();
        assert!((full.theta[0] - half.theta[0]).abs() < 2.0 * 1e-2, "{full:?} {half:?}");
    }

    #[test]
    fn divergence_is_reported_with_last_iterate() {
        let out = robbins_monro_with(&[1.0], &RmSchedule { a: 5.0, ..Default::default() }, |t| vec![t[0]]);
        match out {
            Err(GrfError::Diverged { last, .. }) => assert!(last[0] > 100.0),
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(robbins_monro_with(&[0.0], &RmSchedule { tol: 0.0, ..Default::default() }, |t| t.to_vec()).is_err());
    }

    #[test]
    fn unconverged_runs_are_flagged() {
        let schedule = RmSchedule {
            max_iter: 10,
            ..Default::default()
        };
        let out = robbins_monro_with(&[5.0], &schedule, |t| vec![-t[0]]).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 10);
    }

    #[test]
    fn exact_gradient_iterates_find_the_grid_mode() {
        use crate::models::SpinLattice;
        use crate::numeric::linspace;
        use crate::oracle::exact_posterior_grid;
        let cases = [
            (2, 2, vec![1, 1, -1, 1]),
            (3, 3, vec![1, 1, -1, 1, 1, 1, -1, 1, 1]),
            (2, 3, vec![1, -1, 1, -1, 1, 1]),
        ];
        for (h, w, spins) in cases {
            let model = GrfModel::ising_default(h, w).unwrap();
            let y = GrfState::Lattice(SpinLattice::new(h, w, spins).unwrap());
            let e = EnumeratedModel::new(&model).unwrap();
            let s = model.suff_stats(&y).unwrap();
            let grid = exact_posterior_grid(&model, &y, &linspace(-1.5, 1.5, 3001)).unwrap();
            let schedule = RmSchedule {
                tol: 1e-7,
                a: 0.5,
                max_iter: 200_000,
                ..Default::default()
            };
            let out = robbins_monro_with(&[0.0], &schedule, |t| {
                let (mean, _) = e.moments(t);
                grad_from_expected(&model, &s, t, &mean)
            })
            .unwrap();
            assert!(out.converged);
            assert!((out.theta[0] - grid.argmax()).abs() <= 2.0 * grid.spacing(), "{h}x{w}: {out:?} vs {}", grid.argmax());
        }
    }

    #[test]
    fn independent_dyad_hessian_matches_closed_form() {
        let n = 8;
        let model = GrfModel::ergm(n, StatSet::new([ErgmStat::Edges]).unwrap(), GaussianPrior::isotropic(1, 100.0).unwrap()).unwrap();
        let y = GrfState::Graph(UndirectedGraph::empty(n));
        let theta = -0.7f64;
        let p = theta.exp() / (1.0 + theta.exp());
        let dyads = (n * (n - 1) / 2) as f64;
        let exact = -dyads * p * (1.0 - p) - 0.01;
        let config = SamplerConfig {
            aux_burnin: 2,
            aux_thin: 1,
            ..Default::default()
        };
        let draws = 4000;
        let h = estimate_log_posterior_hessian(&model, &y, &[theta], draws, &config, &mut seeded(21)).unwrap();
        // Binomial(D, p): SE of the sample variance is sqrt((mu4 - sigma^4) / n).
        let var = dyads * p * (1.0 - p);
        let mu4 = var * (1.0 + 3.0 * (dyads - 2.0) * p * (1.0 - p));
        let se = ((mu4 - var * var) / draws as f64).sqrt();
        assert!((h[(0, 0)] - exact).abs() < 4.0 * se, "{} vs {exact} (se {se})", h[(0, 0)]);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        use crate::models::SpinLattice;
        let model = GrfModel::ising_default(2, 2).unwrap();
        let y = GrfState::Lattice(SpinLattice::new(2, 2, vec![1, 1, -1, 1]).unwrap());
        let e = EnumeratedModel::new(&model).unwrap();
        let s = model.suff_stats(&y).unwrap()[0];
        let log_post = |t: f64| t * s - e.log_z(&[t]) + model.prior().log_density(&[t]);
        let theta = 0.3;
        let h = 1e-4;
        let fd = (log_post(theta + h) - 2.0 * log_post(theta) + log_post(theta - h)) / (h * h);
        let config = SamplerConfig {
            aux_burnin: 20,
            ..Default::default()
        };
        let est = estimate_log_posterior_hessian(&model, &y, &[theta], 20_000, &config, &mut seeded(5)).unwrap();
        assert!(((est[(0, 0)] - fd) / fd).abs() < 0.05, "{} vs {fd}", est[(0, 0)]);
    }

    #[test]
    fn hessian_is_symmetric_and_singularity_is_reported() {
        let model = GrfModel::ergm_default(6, StatSet::all()).unwrap();
        let y = GrfState::Graph(UndirectedGraph::empty(6));
        let config = SamplerConfig {
            aux_burnin: 10,
            ..Default::default()
        };
        let h = estimate_log_posterior_hessian(&model, &y, &[-0.3, 0.0, 0.0, 0.0], 500, &config, &mut seeded(1)).unwrap();
        assert_eq!(h, h.transpose());

        // Three-stars never occur on three nodes.
        let degenerate = GrfModel::ergm_default(3, StatSet::new([ErgmStat::Edges, ErgmStat::ThreeStars]).unwrap()).unwrap();
        let y3 = GrfState::Graph(UndirectedGraph::empty(3));
        let err = estimate_log_posterior_hessian(&degenerate, &y3, &[0.0, 0.0], 200, &config, &mut seeded(1));
        assert!(matches!(err, Err(GrfError::Singular(_))));
        assert!(estimate_log_posterior_hessian(&model, &y, &[0.0; 4], 50, &config, &mut seeded(1)).is_err());
    }

    #[test]
    fn step_matrix_inverts_the_curvature() {
        let sigma = tune_step_matrix(&(-DMatrix::identity(2, 2)), 2.0).unwrap();
        assert_eq!(sigma, DMatrix::identity(2, 2) * 2.0);
        let hess = DMatrix::from_row_slice(3, 3, &[-4.0, 1.0, 0.5, 1.0, -3.0, 0.2, 0.5, 0.2, -2.0]);
        let sigma = tune_step_matrix(&hess, 0.7).unwrap();
        assert!((&sigma * (-&hess) - DMatrix::identity(3, 3) * 0.7).amax() < 1e-10);
        assert!(matches!(
            tune_step_matrix(&DMatrix::identity(2, 2), 1.0),
            Err(GrfError::NotNegativeDefinite(_))
        ));
        assert!(tune_step_matrix(&(-DMatrix::identity(2, 2)), 0.0).is_err());
    }
}
