//! Perturbation bounds for Markov kernels and their exact finite-state checks.
//!
//! Total variation is `(1/2) sum |a - b|` throughout, and `||P - Q||` is the largest
//! row-wise total variation. Every bound here rests on the Dobrushin coefficient
//! `tau(P^k) <= C rho^k`, which both certificate routes provide.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};
use crate::models::{GrfModel, GrfState};
use crate::numeric::{log_sum_exp, trapezoid};
use crate::oracle::EnumeratedModel;
use crate::rng::{chain_rng, stream_seed, ChainRng};

/// Lower limit applied to contraction rates so `C rho^lambda / (1 - rho)` stays finite.
pub const RHO_FLOOR: f64 = 1e-15;
const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic matrix on a finite state space.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    rows: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        let n = rows.nrows();
        if n == 0 || rows.ncols() != n {
            return Err(GrfError::invalid("a kernel must be a non-empty square matrix"));
        }
        for i in 0..n {
            let row = rows.row(i);
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(GrfError::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(GrfError::invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(GrfError::invalid("kernel rows must all have length n"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Rows drawn uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = w.iter().sum();
            for j in 0..n {
                m[(i, j)] = w[j] / total;
            }
        }
        normalize_rows(&mut m);
        Self { rows: m }
    }

    /// Mixes each row with a random row: `(1 - t_i) P_i + t_i Q_i`, `t_i ~ U(0, kappa_max)`,
    /// so the result is within `kappa_max` of `self`.
    pub fn perturb<R: Rng + ?Sized>(&self, kappa_max: f64, rng: &mut R) -> Self {
        let n = self.n();
        let q = Self::random(n, rng);
        let mut m = self.rows.clone();
        for i in 0..n {
            let t = kappa_max * rng.random::<f64>();
            for j in 0..n {
                m[(i, j)] = (1.0 - t) * self.rows[(i, j)] + t * q.rows[(i, j)];
            }
        }
        normalize_rows(&mut m);
        Self { rows: m }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[(i, j)]
    }

    /// `dist * P` for a row vector `dist`.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (i, &d) in dist.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += d * self.rows[(i, j)];
            }
        }
        out
    }

    /// `delta_start P^n` for `n = 1..=n_max`.
    pub fn n_step_laws(&self, start: usize, n_max: usize) -> Vec<Vec<f64>> {
        let mut dist = vec![0.0; self.n()];
        dist[start] = 1.0;
        (0..n_max)
            .map(|_| {
                dist = self.step(&dist);
                dist.clone()
            })
            .collect()
    }

    pub fn power(&self, k: u32) -> DMatrix<f64> {
        let mut result = DMatrix::identity(self.n(), self.n());
        let mut base = self.rows.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        result
    }

    /// Some power up to `n^2` is strictly positive (irreducible and aperiodic).
    pub fn is_primitive(&self) -> bool {
        let n = self.n();
        let pattern = DMatrix::from_fn(n, n, |i, j| self.rows[(i, j)] > 0.0);
        let mut reach = pattern.clone();
        let mut power = 1usize;
        let limit = n * n;
        loop {
            if reach.iter().all(|&b| b) {
                return true;
            }
            if power >= limit {
                return false;
            }
            reach = bool_product(&reach, &pattern);
            power += 1;
        }
    }

    /// Stationary distribution from `pi (P - I) = 0`, `sum pi = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.n();
        let mut a = self.rows.transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| GrfError::Singular("kernel has no unique stationary distribution".into()))?;
        Ok(pi.iter().map(|v| v.max(0.0)).collect())
    }
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        let s: f64 = m.row(i).iter().sum();
        for j in 0..m.ncols() {
            m[(i, j)] /= s;
        }
    }
}

fn bool_product(a: &DMatrix<bool>, b: &DMatrix<bool>) -> DMatrix<bool> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| (0..n).any(|k| a[(i, k)] && b[(k, j)]))
}

/// `(1/2) sum |a_i - b_i|`.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// `max_i (1/2) sum_j |P_ij - Q_ij|`.
pub fn tv_kernel_distance(p: &StochasticMatrix, q: &StochasticMatrix) -> Result<f64> {
    if p.n() != q.n() {
        return Err(GrfError::invalid(format!("kernels have {} and {} states", p.n(), q.n())));
    }
    Ok((0..p.n())
        .map(|i| {
            let a: Vec<f64> = p.rows.row(i).iter().copied().collect();
            let b: Vec<f64> = q.rows.row(i).iter().copied().collect();
            tv_distance(&a, &b)
        })
        .fold(0.0, f64::max))
}

/// Dobrushin coefficient: the largest total variation between two rows.
pub fn dobrushin_coefficient(p: &StochasticMatrix) -> f64 {
    let n = p.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in i + 1..n {
            let d: f64 = 0.5 * (0..n).map(|j| (p.get(i, j) - p.get(k, j)).abs()).sum::<f64>();
            worst = worst.max(d);
        }
    }
    worst
}

/// Doeblin mass `sum_j min_i P_ij`.
pub fn minorization_epsilon(p: &StochasticMatrix) -> f64 {
    let n = p.n();
    (0..n)
        .map(|j| (0..n).map(|i| p.get(i, j)).fold(f64::INFINITY, f64::min))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertMethod {
    Dobrushin,
    Minorization,
}

/// Uniform ergodicity constants: `sup_i ||delta_i P^n - pi|| <= c rho^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityCert {
    pub c: f64,
    pub rho: f64,
    pub method: CertMethod,
}

impl ErgodicityCert {
    pub fn new(c: f64, rho: f64, method: CertMethod) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) || !(rho > 0.0 && rho < 1.0) {
            return Err(GrfError::invalid(format!("need C >= 1 and 0 < rho < 1 (got C = {c}, rho = {rho})")));
        }
        Ok(Self { c, rho, method })
    }

    /// The Mitrophanov prefactor `lambda + C rho^lambda / (1 - rho)`.
    pub fn prefactor(&self) -> f64 {
        mitrophanov_bound(self, 1.0).1
    }
}

/// Certifies uniform ergodicity by the Dobrushin coefficient (`C = 1`) or a one-step
/// minorization (`C = 2`, `rho = 1 - eps`), keeping whichever gives the smaller
/// Mitrophanov prefactor.
pub fn ergodicity_cert(p: &StochasticMatrix) -> Result<ErgodicityCert> {
    if !p.is_primitive() {
        return Err(GrfError::NoCertificate("kernel is not irreducible and aperiodic".into()));
    }
    let mut candidates = Vec::new();
    let tau = dobrushin_coefficient(p);
    if tau < 1.0 {
        candidates.push(ErgodicityCert::new(1.0, tau.max(RHO_FLOOR), CertMethod::Dobrushin)?);
    }
    let eps = minorization_epsilon(p);
    if eps > 0.0 {
        candidates.push(ErgodicityCert::new(2.0, (1.0 - eps).clamp(RHO_FLOOR, 1.0 - f64::EPSILON), CertMethod::Minorization)?);
    }
    candidates
        .into_iter()
        .min_by(|a, b| a.prefactor().total_cmp(&b.prefactor()))
        .ok_or_else(|| {
            GrfError::NoCertificate(format!(
                "Dobrushin coefficient is {tau} and the minorization mass is {eps}"
            ))
        })
}

/// `lambda = ceil(log(1/C) / log rho)` (at least 0) and `(lambda + C rho^lambda / (1 - rho)) kappa`.
pub fn mitrophanov_bound(cert: &ErgodicityCert, kappa: f64) -> (u64, f64) {
    let rho = cert.rho.max(RHO_FLOOR);
    let lambda = ((1.0 / cert.c).ln() / rho.ln()).ceil().max(0.0);
    let bound = (lambda + cert.c * rho.powf(lambda) / (1.0 - rho)) * kappa;
    (lambda as u64, bound)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kappa: f64,
    pub lambda: u64,
    pub bound: f64,
    pub cert: ErgodicityCert,
    /// Exact `||delta_start P^n - delta_start Phat^n||` for `n = 1..=n_max`.
    pub per_n_tv: Vec<f64>,
    /// `bound - max_n per_n_tv`.
    pub worst_slack: f64,
    pub violated: bool,
}

/// Exact n-step distances from `start`, checked against the Mitrophanov bound and the
/// telescoping bound `n kappa`.
pub fn verify_perturbation(
    p: &StochasticMatrix,
    phat: &StochasticMatrix,
    start: usize,
    n_max: usize,
) -> Result<BoundReport> {
    let kappa = tv_kernel_distance(p, phat)?;
    if start >= p.n() {
        return Err(GrfError::invalid(format!("start state {start} out of range")));
    }
    let cert = ergodicity_cert(p)?;
    let (lambda, bound) = mitrophanov_bound(&cert, kappa);
    let laws = p.n_step_laws(start, n_max);
    let laws_hat = phat.n_step_laws(start, n_max);
    let per_n_tv: Vec<f64> = laws.iter().zip(&laws_hat).map(|(a, b)| tv_distance(a, b)).collect();
    // Round-off in the matrix powers is far below this.
    let slack_tol = 1e-12;
    let violated = per_n_tv
        .iter()
        .enumerate()
        .any(|(k, &tv)| tv > bound + slack_tol || tv > (k + 1) as f64 * kappa + slack_tol);
    let worst = per_n_tv.iter().copied().fold(0.0, f64::max);
    Ok(BoundReport {
        kappa,
        lambda,
        bound,
        cert,
        per_n_tv,
        worst_slack: bound - worst,
        violated,
    })
}

/// Summary of a randomized check over many kernel pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub pairs_tested: usize,
    pub violations: usize,
    pub worst_slack: f64,
}

/// Random `(P, Phat)` pairs on `states` states with `||P - Phat|| <= kappa_max`, each from
/// its own stream of `seed`, verified from a random start up to `n_max` steps.
pub fn verify_random_pairs(states: usize, pairs: usize, kappa_max: f64, n_max: usize, seed: u64) -> Result<VerificationSummary> {
    if states == 0 || !(kappa_max >= 0.0 && kappa_max <= 1.0) {
        return Err(GrfError::invalid("need at least one state and 0 <= kappa_max <= 1"));
    }
    let mut violations = 0;
    let mut worst_slack = f64::INFINITY;
    for k in 0..pairs {
        let mut rng = chain_rng(seed, k as u64);
        let p = StochasticMatrix::random(states, &mut rng);
        let phat = p.perturb(kappa_max, &mut rng);
        let start = rng.random_range(0..states);
        let report = verify_perturbation(&p, &phat, start, n_max)?;
        violations += report.violated as usize;
        worst_slack = worst_slack.min(report.worst_slack);
    }
    Ok(VerificationSummary {
        pairs_tested: pairs,
        violations,
        worst_slack,
    })
}

fn uniform_spacing(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(GrfError::invalid("grid needs at least two points"));
    }
    let d = grid[1] - grid[0];
    if !(d > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d.max(1.0)) {
        return Err(GrfError::invalid("grid must be uniform and increasing"));
    }
    Ok(d)
}

fn gaussian_density(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

fn scalar_model(model: &GrfModel, grid: &[f64], proposal_sd: f64) -> Result<f64> {
    if model.dim() != 1 {
        return Err(GrfError::invalid("grid kernels need a one-parameter model"));
    }
    if !(proposal_sd > 0.0) {
        return Err(GrfError::invalid("proposal_sd must be positive"));
    }
    uniform_spacing(grid)
}

/// Symmetric random-walk proposal restricted to the grid: `q_ij = phi(theta_j - theta_i) d`
/// off the diagonal, scaled down if a row would exceed 1. Leftover mass stays put.
fn grid_proposal(grid: &[f64], proposal_sd: f64, spacing: f64) -> DMatrix<f64> {
    let n = grid.len();
    let mut q = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            gaussian_density(grid[j] - grid[i], proposal_sd) * spacing
        }
    });
    let max_row = (0..n).map(|i| q.row(i).sum()).fold(0.0, f64::max);
    if max_row > 1.0 {
        q /= max_row;
    }
    q
}

fn log_posterior_on_grid(model: &GrfModel, y: &GrfState, grid: &[f64], e: &EnumeratedModel) -> Result<Vec<f64>> {
    let s = model.suff_stats(y)?[0];
    Ok(grid
        .iter()
        .map(|&t| t * s - e.log_z(&[t]) + model.prior().log_density(&[t]))
        .collect())
}

fn fill_diagonal(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        let off: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = (1.0 - off).max(0.0);
    }
    normalize_rows(m);
}

/// Exact M-H kernel on the grid with the grid-restricted Gaussian random walk.
pub fn discretized_mh_kernel(model: &GrfModel, y: &GrfState, grid: &[f64], proposal_sd: f64) -> Result<StochasticMatrix> {
    let spacing = scalar_model(model, grid, proposal_sd)?;
    let e = EnumeratedModel::new(model)?;
    let lp = log_posterior_on_grid(model, y, grid, &e)?;
    let mut p = grid_proposal(grid, proposal_sd, spacing);
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if i != j {
                p[(i, j)] *= (lp[j] - lp[i]).min(0.0).exp();
            }
        }
    }
    fill_diagonal(&mut p);
    StochasticMatrix::new(p)
}

/// Exact M-H kernel and the noisy exchange kernel with `n_aux` independent exact
/// auxiliary draws, both on the grid. The noisy acceptance probability is averaged over
/// every multinomial allocation of the draws to the statistic values.
pub fn grid_exchange_kernels(
    model: &GrfModel,
    y: &GrfState,
    grid: &[f64],
    proposal_sd: f64,
    n_aux: usize,
) -> Result<(StochasticMatrix, StochasticMatrix)> {
    let spacing = scalar_model(model, grid, proposal_sd)?;
    if n_aux == 0 {
        return Err(GrfError::invalid("n_aux must be at least 1"));
    }
    let e = EnumeratedModel::new(model)?;
    let support: Vec<f64> = e.support().map(|(s, _)| s[0]).collect();
    let count = composition_count(n_aux, support.len());
    if count > 2.0e6 {
        return Err(GrfError::OracleRefusal {
            what: format!("{count:.3e} multinomial allocations"),
            limit: "2000000".into(),
        });
    }
    let allocations = compositions(n_aux, support.len());
    let log_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n_aux).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let lp = log_posterior_on_grid(model, y, grid, &e)?;
    let q = grid_proposal(grid, proposal_sd, spacing);
    let n = grid.len();
    let mut exact = q.clone();
    let mut noisy = q;
    let s_y = model.suff_stats(y)?[0];
    let prior = model.prior();
    for j in 0..n {
        let log_probs: Vec<f64> = e.stat_probabilities(&[grid[j]]).iter().map(|p| p.ln()).collect();
        for i in 0..n {
            if i == j {
                continue;
            }
            exact[(i, j)] *= (lp[j] - lp[i]).min(0.0).exp();
            let d = grid[i] - grid[j];
            let log_a = (grid[j] - grid[i]) * s_y + prior.log_density(&[grid[j]]) - prior.log_density(&[grid[i]]);
            let terms: Vec<f64> = support.iter().map(|s| d * s).collect();
            let mut acc = 0.0;
            for alloc in &allocations {
                let mut log_w = log_fact[n_aux];
                let mut parts = Vec::with_capacity(alloc.len());
                for (k, &c) in alloc.iter().enumerate() {
                    if c > 0 {
                        log_w += c as f64 * log_probs[k] - log_fact[c];
                        parts.push((c as f64).ln() + terms[k]);
                    }
                }
                let log_ratio = log_sum_exp(&parts) - (n_aux as f64).ln();
                acc += log_w.exp() * (log_a + log_ratio).min(0.0).exp();
            }
            noisy[(i, j)] *= acc;
        }
    }
    fill_diagonal(&mut exact);
    fill_diagonal(&mut noisy);
    Ok((StochasticMatrix::new(exact)?, StochasticMatrix::new(noisy)?))
}

/// `C(n + k - 1, k - 1)`, in floating point so that huge counts do not overflow.
fn composition_count(n: usize, k: usize) -> f64 {
    (1..k).fold(1.0, |acc, i| acc * (n + i) as f64 / i as f64)
}

/// All ways to write `n` as an ordered sum of `k` non-negative parts.
fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=n {
            prefix.push(c);
            rec(n - c, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Report {
    /// `sup_theta int h(theta'|theta) delta(theta, theta') dtheta'` for the given `N`.
    pub sup_integral: f64,
    pub cert: ErgodicityCert,
    pub prefactor: f64,
    pub bound: f64,
}

/// Noisy exchange perturbation bound on a one-parameter model with an enumerable state space.
/// `delta(theta, theta')` uses the exact variance of the single-draw importance ratio; the
/// certificate defaults to the one of [`discretized_mh_kernel`].
pub fn corollary1_bound(
    model: &GrfModel,
    y: &GrfState,
    grid: &[f64],
    proposal_sd: f64,
    n_aux: usize,
    cert: Option<ErgodicityCert>,
) -> Result<Corollary1Report> {
    scalar_model(model, grid, proposal_sd)?;
    if n_aux == 0 {
        return Err(GrfError::invalid("n_aux must be at least 1"));
    }
    let e = EnumeratedModel::new(model)?;
    let s_y = model.suff_stats(y)?[0];
    // Unnormalised: the Z ratio enters through the variance of the importance weights.
    let lq: Vec<f64> = grid.iter().map(|&t| t * s_y + model.prior().log_density(&[t])).collect();
    let n = grid.len();
    let mut sup = 0.0f64;
    for i in 0..n {
        let integrand: Vec<f64> = (0..n)
            .map(|j| {
                if i == j {
                    return 0.0;
                }
                let (_, var) = e.ratio_moments(&[grid[i]], &[grid[j]]);
                // The Gaussian proposal is symmetric, so h cancels in the ratio.
                gaussian_density(grid[j] - grid[i], proposal_sd) * (lq[j] - lq[i]).exp() * var.sqrt()
            })
            .collect();
        sup = sup.max(trapezoid(grid, &integrand));
    }
    let sup_integral = sup / (n_aux as f64).sqrt();
    let cert = match cert {
        Some(c) => c,
        None => ergodicity_cert(&discretized_mh_kernel(model, y, grid, proposal_sd)?)?,
    };
    let prefactor = cert.prefactor();
    Ok(Corollary1Report {
        sup_integral,
        cert,
        prefactor,
        bound: prefactor * sup_integral,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Constants {
    pub rho: f64,
    pub c: f64,
    pub lambda: u64,
    /// `c_pi^2 c_h^2 K^4 (lambda + C rho^lambda / (1 - rho))`.
    pub prefactor: f64,
    /// `prefactor / sqrt(N)`.
    pub total_bound: f64,
}

/// Explicit constants of the `C / sqrt(N)` bound for the noisy exchange kernel.
pub fn theorem3_constants(c_pi: f64, c_h: f64, k: f64, n: f64) -> Result<Theorem3Constants> {
    if !(c_pi >= 1.0 && c_h >= 1.0 && k >= 1.0 && n >= 1.0) || ![c_pi, c_h, k, n].iter().all(|v| v.is_finite()) {
        return Err(GrfError::invalid("c_pi, c_h, K and N must all be finite and at least 1"));
    }
    let mix = (c_pi * c_h).powi(3) * k.powi(4);
    let rho = (1.0 - 1.0 / mix).max(RHO_FLOOR);
    let cert = ErgodicityCert {
        c: 2.0,
        rho,
        method: CertMethod::Minorization,
    };
    let (lambda, unit) = mitrophanov_bound(&cert, 1.0);
    let prefactor = (c_pi * c_h).powi(2) * k.powi(4) * unit;
    Ok(Theorem3Constants {
        rho,
        c: 2.0,
        lambda,
        prefactor,
        total_bound: prefactor / n.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinDelta {
    pub delta: f64,
    /// `sqrt(delta / 2)`.
    pub kernel_bound: f64,
    /// `sqrt(delta)`, the weaker form.
    pub kernel_bound_loose: f64,
}

/// Kernel-distance bound for the noisy Langevin step with `N` auxiliary draws.
/// Requires `N > 4 k S^2 ||Sigma||^2`.
pub fn langevin_delta_bound(k: f64, s: f64, sigma_norm: f64, n: f64) -> Result<LangevinDelta> {
    if !(k > 0.0 && s > 0.0 && sigma_norm > 0.0) {
        return Err(GrfError::invalid("k, S and ||Sigma|| must be positive"));
    }
    let threshold = 4.0 * k * s * s * sigma_norm * sigma_norm;
    if !(n > threshold) {
        return Err(GrfError::OutOfRegime { threshold, n });
    }
    let scale = 4.0 * s * s * sigma_norm * sigma_norm * n;
    let delta = (k * n.ln() / scale).exp_m1() + 4.0 * k * std::f64::consts::PI.sqrt() * s * sigma_norm / n;
    Ok(LangevinDelta {
        delta,
        kernel_bound: (delta / 2.0).sqrt(),
        kernel_bound_loose: delta.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTv {
    pub tv: f64,
    pub bootstrap_se: f64,
    /// Continuous bins (an extra atom bin holds exact repeats of the start).
    pub bins: usize,
    pub n_reps: usize,
}

/// Histogram estimate of the total variation between the laws of `step_a(theta0)` and
/// `step_b(theta0)`. Replicate `r` hands both functions stream `r` of `seed`; a value equal
/// to `theta0` (a rejection) is its own bin. The standard error comes from 200 paired
/// bootstrap resamples of the replicates.
pub fn empirical_kernel_tv<A, B>(
    mut step_a: A,
    mut step_b: B,
    theta0: f64,
    n_reps: usize,
    bins: Option<usize>,
    seed: u64,
) -> Result<EmpiricalTv>
where
    A: FnMut(f64, &mut ChainRng) -> f64,
    B: FnMut(f64, &mut ChainRng) -> f64,
{
    if n_reps < 10_000 {
        return Err(GrfError::invalid("the empirical kernel distance needs at least 10^4 replicates"));
    }
    let mut xa = Vec::with_capacity(n_reps);
    let mut xb = Vec::with_capacity(n_reps);
    for r in 0..n_reps {
        xa.push(step_a(theta0, &mut chain_rng(seed, r as u64)));
        xb.push(step_b(theta0, &mut chain_rng(seed, r as u64)));
    }
    Ok(histogram_tv(&xa, &xb, theta0, bins, stream_seed(seed, u64::MAX)))
}

/// Shared-bin histogram distance between two paired samples; see [`empirical_kernel_tv`].
pub fn histogram_tv(xa: &[f64], xb: &[f64], atom: f64, bins: Option<usize>, bootstrap_seed: u64) -> EmpiricalTv {
    let n = xa.len();
    let bins = bins.unwrap_or_else(|| (n as f64).cbrt().ceil() as usize).max(1);
    let continuous = xa.iter().chain(xb).copied().filter(|&v| v != atom);
    let (lo, hi) = continuous.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let bin_of = |v: f64| -> usize {
        if v == atom {
            bins
        } else {
            (((v - lo) / width) as usize).min(bins - 1)
        }
    };
    let ia: Vec<usize> = xa.iter().map(|&v| bin_of(v)).collect();
    let ib: Vec<usize> = xb.iter().map(|&v| bin_of(v)).collect();
    let tv_of = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
        let mut diff = vec![0i64; bins + 1];
        let mut count = 0usize;
        for r in idx {
            diff[ia[r]] += 1;
            diff[ib[r]] -= 1;
            count += 1;
        }
        0.5 * diff.iter().map(|d| d.unsigned_abs() as f64).sum::<f64>() / count as f64
    };
    let tv = tv_of(&mut (0..n));
    let mut rng = crate::rng::seeded(bootstrap_seed);
    let boots: Vec<f64> = (0..200)
        .map(|_| {
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            tv_of(&mut picks.into_iter())
        })
        .collect();
    EmpiricalTv {
        tv,
        bootstrap_se: crate::numeric::variance(&boots).sqrt(),
        bins,
        n_reps: n,
    }
}
