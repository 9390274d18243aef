use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GrfError, Result};
use crate::models::{dot, GrfModel, GrfState, ParamVec, SuffStats};
use crate::numeric::log_mean_exp;
use crate::oracle::PartitionOracle;

use super::gibbs::draw_auxiliary_stats;
use super::{Algorithm, ChainState, SamplerConfig, StepMatrix};

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `log((1/N) sum_i q_theta(y'_i) / q_theta'(y'_i))` for auxiliary draws at `theta_prime`.
pub fn log_ratio_estimate(theta: &[f64], theta_prime: &[f64], aux: &[SuffStats]) -> f64 {
    let d = diff(theta, theta_prime);
    let terms: Vec<f64> = aux.iter().map(|s| dot(&d, s)).collect();
    log_mean_exp(&terms)
}

/// Log acceptance ratio of the exchange algorithm for a single auxiliary draw `y'`.
pub fn exchange_log_alpha(model: &GrfModel, s_y: &[f64], theta: &[f64], theta_prime: &[f64], s_aux: &[f64]) -> f64 {
    let prior = model.prior();
    dot(&diff(theta_prime, theta), s_y) + prior.log_density(theta_prime) - prior.log_density(theta)
        + dot(&diff(theta, theta_prime), s_aux)
}

/// Log acceptance ratio with the `N`-sample importance estimate of `Z(theta)/Z(theta')`.
pub fn noisy_exchange_log_alpha(
    model: &GrfModel,
    s_y: &[f64],
    theta: &[f64],
    theta_prime: &[f64],
    aux: &[SuffStats],
) -> f64 {
    let prior = model.prior();
    dot(&diff(theta_prime, theta), s_y) + prior.log_density(theta_prime) - prior.log_density(theta)
        + log_ratio_estimate(theta, theta_prime, aux)
}

/// Log acceptance ratio of the MALA-exchange kernels. `log_ratio` is the (estimated)
/// log of `Z(theta)/Z(theta')`; `grad` and `grad_prime` are the gradient estimates used
/// by the forward and reverse Gaussian proposals.
#[allow(clippy::too_many_arguments)]
pub fn mala_log_alpha(
    model: &GrfModel,
    s_y: &[f64],
    step: &StepMatrix,
    theta: &[f64],
    grad: &[f64],
    theta_prime: &[f64],
    grad_prime: &[f64],
    log_ratio: f64,
) -> f64 {
    let prior = model.prior();
    let forward = step.log_kernel(theta_prime, &step.drift_mean(theta, grad));
    let reverse = step.log_kernel(theta, &step.drift_mean(theta_prime, grad_prime));
    dot(&diff(theta_prime, theta), s_y) + prior.log_density(theta_prime) - prior.log_density(theta) + reverse
        - forward
        + log_ratio
}

/// `s(y) - expected + grad log prior(theta)`.
pub fn grad_from_expected(model: &GrfModel, s_y: &[f64], theta: &[f64], expected: &[f64]) -> Vec<f64> {
    let prior_grad = model.prior().grad(theta);
    s_y.iter()
        .zip(expected)
        .zip(prior_grad)
        .map(|((s, e), g)| s - e + g)
        .collect()
}

fn grad_from_stats(model: &GrfModel, s_y: &[f64], theta: &[f64], aux: &[SuffStats]) -> Vec<f64> {
    let m = model.dim();
    let mut mean = vec![0.0; m];
    for s in aux {
        for (acc, v) in mean.iter_mut().zip(s.iter()) {
            *acc += v;
        }
    }
    let n = aux.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    grad_from_expected(model, s_y, theta, &mean)
}

/// Monte Carlo estimate `s(y) - (1/N) sum s(y'_i) + grad log prior(theta)` of the
/// log-posterior gradient, with `aux` drawn from `f(.|theta)`.
pub fn grad_log_posterior_estimate(model: &GrfModel, y: &GrfState, theta: &[f64], aux: &[GrfState]) -> Result<Vec<f64>> {
    if aux.is_empty() {
        return Err(GrfError::invalid("gradient estimate needs at least one auxiliary state"));
    }
    if theta.len() != model.dim() {
        return Err(GrfError::invalid("theta has the wrong dimension"));
    }
    let s_y = model.suff_stats(y)?;
    let stats = aux.iter().map(|a| model.suff_stats(a)).collect::<Result<Vec<_>>>()?;
    Ok(grad_from_stats(model, &s_y, theta, &stats))
}

/// One unadjusted Langevin move `theta + (Sigma/2) grad + eta`, `eta ~ N(0, Sigma)`.
pub fn langevin_update<R: Rng + ?Sized>(theta: &[f64], grad: &[f64], step: &StepMatrix, rng: &mut R) -> Vec<f64> {
    let mean = step.drift_mean(theta, grad);
    let noise = step.sample_noise(rng);
    mean.iter().zip(noise).map(|(m, e)| m + e).collect()
}

#[inline]
fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    // NaN compares false, so a broken ratio rejects.
    u < log_alpha.min(0.0).exp()
}

/// Binds a model, the observed data and a configuration; exposes one step per kernel.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    model: &'a GrfModel,
    observed: SuffStats,
    config: SamplerConfig,
    step: Option<StepMatrix>,
    oracle: Option<PartitionOracle>,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a GrfModel, y: &GrfState, config: SamplerConfig) -> Result<Self> {
        config.validate(model.dim())?;
        let observed = model.suff_stats(y)?;
        let step = match &config.step_matrix {
            Some(_) => Some(config.step(model.dim())?),
            None => None,
        };
        Ok(Self {
            model,
            observed,
            config,
            step,
            oracle: None,
        })
    }

    /// Attaches the exact partition function needed by [`Sampler::exact_mh_step`].
    pub fn with_oracle(mut self) -> Result<Self> {
        self.oracle = Some(PartitionOracle::for_model(self.model)?);
        Ok(self)
    }

    pub fn with_step(mut self, step: StepMatrix) -> Result<Self> {
        if step.dim() != self.model.dim() {
            return Err(GrfError::Config("step matrix dimension does not match the model".into()));
        }
        self.step = Some(step);
        Ok(self)
    }

    pub fn model(&self) -> &GrfModel {
        self.model
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn observed_stats(&self) -> &SuffStats {
        &self.observed
    }

    fn step_matrix(&self) -> Result<&StepMatrix> {
        self.step
            .as_ref()
            .ok_or_else(|| GrfError::Config("this algorithm needs a step_matrix".into()))
    }

    /// Checks that everything `algorithm` needs is configured.
    pub fn prepare(mut self, algorithm: Algorithm) -> Result<Self> {
        if algorithm.needs_step_matrix() {
            self.step_matrix()?;
        }
        if algorithm == Algorithm::ExactMh && self.oracle.is_none() {
            self = self.with_oracle()?;
        }
        Ok(self)
    }

    pub fn initial_theta(&self) -> ParamVec {
        match &self.config.initial_theta {
            Some(t) => ParamVec(t.clone()),
            None => ParamVec(self.model.prior().mean.clone()),
        }
    }

    /// Starting state; the MALA-exchange kernels also draw `y_theta0` and its gradient.
    pub fn initial_state<R: Rng + ?Sized>(&self, algorithm: Algorithm, theta: ParamVec, rng: &mut R) -> ChainState {
        let mut state = ChainState::new(theta);
        if matches!(algorithm, Algorithm::MalaExchange | Algorithm::NoisyMalaExchange) {
            self.refresh_caches(&mut state, rng);
        }
        state
    }

    /// Redraws `y_theta` and the gradient estimate at the current position.
    pub fn refresh_caches<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let aux = draw_auxiliary_stats(self.model, &state.theta, &self.config, self.config.n_aux, rng);
        state.cached_grad = Some(grad_from_stats(self.model, &self.observed, &state.theta, &aux));
        state.cached_aux = Some(aux);
    }

    fn random_walk<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        theta
            .iter()
            .map(|t| t + self.config.rw_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn step<R: Rng + ?Sized>(&self, algorithm: Algorithm, state: &mut ChainState, rng: &mut R) -> Result<bool> {
        match algorithm {
            Algorithm::ExactMh => self.exact_mh_step(state, rng),
            Algorithm::Exchange => Ok(self.exchange_step(state, rng)),
            Algorithm::NoisyExchange => Ok(self.noisy_exchange_step(state, rng)),
            Algorithm::NoisyLangevin => self.noisy_langevin_step(state, rng),
            Algorithm::MalaExchange => self.mala_exchange_step(state, rng),
            Algorithm::NoisyMalaExchange => self.noisy_mala_exchange_step(state, rng),
        }
    }

    /// Log acceptance ratio of the exact M-H kernel.
    pub fn exact_log_alpha(&self, theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
        let oracle = self
            .oracle
            .as_ref()
            .ok_or_else(|| GrfError::Config("exact M-H needs the partition oracle".into()))?;
        let prior = self.model.prior();
        Ok(dot(&diff(theta_prime, theta), &self.observed) - (oracle.log_z(theta_prime) - oracle.log_z(theta))
            + prior.log_density(theta_prime)
            - prior.log_density(theta))
    }

    pub fn exact_mh_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<bool> {
        let proposal = self.random_walk(&state.theta, rng);
        let log_alpha = self.exact_log_alpha(&state.theta, &proposal)?;
        let accepted = accept(log_alpha, rng);
        if accepted {
            state.theta = ParamVec(proposal);
        }
        Ok(accepted)
    }

    pub fn exchange_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> bool {
        let proposal = self.random_walk(&state.theta, rng);
        let aux = draw_auxiliary_stats(self.model, &proposal, &self.config, 1, rng);
        let log_alpha = exchange_log_alpha(self.model, &self.observed, &state.theta, &proposal, &aux[0]);
        let accepted = accept(log_alpha, rng);
        if accepted {
            state.theta = ParamVec(proposal);
        }
        accepted
    }

    pub fn noisy_exchange_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> bool {
        let proposal = self.random_walk(&state.theta, rng);
        let aux = draw_auxiliary_stats(self.model, &proposal, &self.config, self.config.n_aux, rng);
        let log_alpha = noisy_exchange_log_alpha(self.model, &self.observed, &state.theta, &proposal, &aux);
        let accepted = accept(log_alpha, rng);
        if accepted {
            state.theta = ParamVec(proposal);
        }
        accepted
    }

    /// Unadjusted move with a fresh gradient estimate; always reports acceptance.
    pub fn noisy_langevin_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<bool> {
        let step = self.step_matrix()?;
        let aux = draw_auxiliary_stats(self.model, &state.theta, &self.config, self.config.n_aux, rng);
        let grad = grad_from_stats(self.model, &self.observed, &state.theta, &aux);
        state.theta = ParamVec(langevin_update(&state.theta, &grad, step, rng));
        state.cached_grad = None;
        state.cached_aux = None;
        Ok(true)
    }

    fn mala_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R, single_ratio: bool) -> Result<bool> {
        let step = self.step_matrix()?;
        if state.cached_grad.is_none() || state.cached_aux.is_none() {
            self.refresh_caches(state, rng);
        }
        let grad = state.cached_grad.as_ref().expect("gradient cache filled above");
        let proposal = langevin_update(&state.theta, grad, step, rng);
        let aux = draw_auxiliary_stats(self.model, &proposal, &self.config, self.config.n_aux, rng);
        let grad_prime = grad_from_stats(self.model, &self.observed, &proposal, &aux);
        let log_ratio = if single_ratio {
            dot(&diff(&state.theta, &proposal), &aux[0])
        } else {
            log_ratio_estimate(&state.theta, &proposal, &aux)
        };
        let log_alpha = mala_log_alpha(
            self.model,
            &self.observed,
            step,
            &state.theta,
            grad,
            &proposal,
            &grad_prime,
            log_ratio,
        );
        let accepted = accept(log_alpha, rng);
        if accepted {
            state.theta = ParamVec(proposal);
            state.cached_grad = Some(grad_prime);
            state.cached_aux = Some(aux);
        }
        Ok(accepted)
    }

    /// MALA proposal from the cached gradient; the ratio uses the first auxiliary draw only.
    pub fn mala_exchange_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<bool> {
        self.mala_step(state, rng, true)
    }

    /// As [`Sampler::mala_exchange_step`] with the `N`-sample ratio estimate.
    pub fn noisy_mala_exchange_step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<bool> {
        self.mala_step(state, rng, false)
    }
}
