//! Exact ground truth for small instances.
//!
//! `log Z(theta)` is always the canonical representation. Two routes are
//! available: full enumeration of the state space (any model with at most
//! [`MAX_ENUM_SITES`] binary sites), and the column transfer matrix for Ising
//! lattices whose shorter side is at most [`MAX_TRANSFER_HEIGHT`].

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GrfError, Result};
use crate::models::{dot, GrfModel, GrfState, ModelKind, Site};
use crate::numeric::{log_sum_exp, trapezoid};

pub const MAX_ENUM_SITES: usize = 24;
pub const MAX_TRANSFER_HEIGHT: usize = 20;

/// Step used for finite differences of the transfer-matrix `log Z`.
pub const FD_STEP: f64 = 1e-5;

fn refuse_enumeration(model: &GrfModel) -> GrfError {
    GrfError::OracleRefusal {
        what: format!("{} with {} binary sites", model.describe(), model.n_sites()),
        limit: format!("2^{MAX_ENUM_SITES} configurations"),
    }
}

/// Walks every configuration in Gray-code order, handing each state and its statistics to `visit`.
pub fn for_each_state<F>(model: &GrfModel, mut visit: F) -> Result<()>
where
    F: FnMut(&GrfState, &[f64]),
{
    let n = model.n_sites();
    if n > MAX_ENUM_SITES {
        return Err(refuse_enumeration(model));
    }
    let mut state = model.state_from_code(0);
    let mut stats = model.stats_unchecked(&state).0;
    visit(&state, &stats);
    for i in 1u64..(1u64 << n) {
        let bit = i.trailing_zeros() as usize;
        let site = model.site_at(bit);
        let delta = model.change_statistic(&state, site)?;
        for (s, d) in stats.iter_mut().zip(delta.iter()) {
            *s += d;
        }
        match (&mut state, site) {
            (GrfState::Lattice(l), Site::Cell(k)) => l.flip(k),
            (GrfState::Graph(g), Site::Dyad(a, b)) => g.toggle(a, b),
            _ => unreachable!(),
        }
        visit(&state, &stats);
    }
    Ok(())
}

/// Density of states: every distinct statistic vector with its log multiplicity.
#[derive(Clone, Debug)]
pub struct EnumeratedModel {
    dim: usize,
    stats: Vec<Vec<f64>>,
    log_counts: Vec<f64>,
}

impl EnumeratedModel {
    pub fn new(model: &GrfModel) -> Result<Self> {
        let mut counts: HashMap<Vec<i64>, u64> = HashMap::new();
        for_each_state(model, |_, s| {
            let key: Vec<i64> = s.iter().map(|v| v.round() as i64).collect();
            *counts.entry(key).or_insert(0) += 1;
        })?;
        let mut entries: Vec<(Vec<i64>, u64)> = counts.into_iter().collect();
        entries.sort();
        Ok(Self {
            dim: model.dim(),
            stats: entries
                .iter()
                .map(|(k, _)| k.iter().map(|&v| v as f64).collect())
                .collect(),
            log_counts: entries.iter().map(|(_, c)| (*c as f64).ln()).collect(),
        })
    }

    /// Distinct statistic vectors and their multiplicities.
    pub fn support(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.stats
            .iter()
            .zip(&self.log_counts)
            .map(|(s, lc)| (s.as_slice(), lc.exp()))
    }

    fn log_weights(&self, theta: &[f64]) -> Vec<f64> {
        self.stats
            .iter()
            .zip(&self.log_counts)
            .map(|(s, lc)| lc + dot(theta, s))
            .collect()
    }

    pub fn log_z(&self, theta: &[f64]) -> f64 {
        log_sum_exp(&self.log_weights(theta))
    }

    /// Probability of each distinct statistic vector under `f(.|theta)`, aligned with [`Self::support`].
    pub fn stat_probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let lw = self.log_weights(theta);
        let lz = log_sum_exp(&lw);
        lw.iter().map(|w| (w - lz).exp()).collect()
    }

    /// Mean vector and covariance matrix of `s(y)` under `f(.|theta)`.
    pub fn moments(&self, theta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let probs = self.stat_probabilities(theta);
        let mut mean = vec![0.0; self.dim];
        for (p, s) in probs.iter().zip(&self.stats) {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += p * v;
            }
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for (p, s) in probs.iter().zip(&self.stats) {
            for a in 0..self.dim {
                for b in 0..self.dim {
                    cov[(a, b)] += p * (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
        (mean, cov)
    }

    /// Mean and variance of `q_theta(y') / q_theta_prime(y')` for `y' ~ f(.|theta_prime)`.
    pub fn ratio_moments(&self, theta: &[f64], theta_prime: &[f64]) -> (f64, f64) {
        let probs = self.stat_probabilities(theta_prime);
        let diff: Vec<f64> = theta.iter().zip(theta_prime).map(|(a, b)| a - b).collect();
        let ratios: Vec<f64> = self.stats.iter().map(|s| dot(&diff, s).exp()).collect();
        let m1: f64 = probs.iter().zip(&ratios).map(|(p, r)| p * r).sum();
        let var = probs.iter().zip(&ratios).map(|(p, r)| p * (r - m1) * (r - m1)).sum();
        (m1, var)
    }
}

/// `log Z(theta)` by summing over every configuration.
pub fn brute_force_log_z(model: &GrfModel, theta: &[f64]) -> Result<f64> {
    if theta.len() != model.dim() {
        return Err(GrfError::invalid("theta dimension does not match the model"));
    }
    Ok(EnumeratedModel::new(model)?.log_z(theta))
}

/// Exact `log Z` of the free-boundary Ising model by the column transfer matrix.
///
/// The lattice is oriented so that columns run along the shorter side; each
/// new column is absorbed one spin at a time, so a column costs
/// `O(h 2^h)` rather than `O(4^h)`.
pub fn ising_transfer_log_z(height: usize, width: usize, theta: f64) -> Result<f64> {
    if height == 0 || width == 0 {
        return Err(GrfError::invalid("lattice dimensions must be at least 1"));
    }
    let (h, len) = if height <= width { (height, width) } else { (width, height) };
    if h > MAX_TRANSFER_HEIGHT {
        return Err(GrfError::OracleRefusal {
            what: format!("transfer matrix for a {height}x{width} lattice"),
            limit: format!("shorter side <= {MAX_TRANSFER_HEIGHT}"),
        });
    }
    if !theta.is_finite() {
        return Err(GrfError::invalid("theta must be finite"));
    }
    let n_states = 1usize << h;
    let abs = theta.abs();
    // Every factor is scaled into (0, 1]; the removed mass is tracked in log_scale.
    let same = (theta - abs).exp();
    let diff = (-theta - abs).exp();
    let vertical: Vec<f64> = (0..n_states)
        .map(|c| {
            let disagree = if h > 1 {
                ((c ^ (c >> 1)) & ((1 << (h - 1)) - 1)).count_ones() as f64
            } else {
                0.0
            };
            let v = (h - 1) as f64 - 2.0 * disagree;
            (theta * v - abs * (h - 1) as f64).exp()
        })
        .collect();
    let per_column_shift = abs * (h - 1) as f64;

    let mut v = vertical.clone();
    let mut log_scale = per_column_shift;
    for _ in 1..len {
        for r in 0..h {
            let bit = 1usize << r;
            for c in 0..n_states {
                if c & bit == 0 {
                    let down = v[c];
                    let up = v[c | bit];
                    v[c] = down * same + up * diff;
                    v[c | bit] = down * diff + up * same;
                }
            }
        }
        let mut max = 0.0f64;
        for (x, w) in v.iter_mut().zip(&vertical) {
            *x *= w;
            max = max.max(*x);
        }
        for x in v.iter_mut() {
            *x /= max;
        }
        log_scale += max.ln() + per_column_shift + abs * h as f64;
    }
    Ok(log_scale + v.iter().sum::<f64>().ln())
}

/// Cached exact `log Z` for one model: enumeration or transfer matrix.
#[derive(Clone, Debug)]
pub enum PartitionOracle {
    Enumerated(EnumeratedModel),
    Transfer { height: usize, width: usize },
}

impl PartitionOracle {
    /// Ising lattices above 16 sites use the transfer matrix; anything else is enumerated.
    pub fn for_model(model: &GrfModel) -> Result<Self> {
        match model.kind() {
            ModelKind::Ising { height, width } if height * width > 16 => {
                if (*height).min(*width) > MAX_TRANSFER_HEIGHT {
                    return Err(GrfError::OracleRefusal {
                        what: format!("exact oracle for a {height}x{width} lattice"),
                        limit: format!("shorter side <= {MAX_TRANSFER_HEIGHT}"),
                    });
                }
                Ok(PartitionOracle::Transfer {
                    height: *height,
                    width: *width,
                })
            }
            _ => Ok(PartitionOracle::Enumerated(EnumeratedModel::new(model)?)),
        }
    }

    pub fn log_z(&self, theta: &[f64]) -> f64 {
        match self {
            PartitionOracle::Enumerated(e) => e.log_z(theta),
            PartitionOracle::Transfer { height, width } => {
                ising_transfer_log_z(*height, *width, theta[0]).expect("dimensions validated at construction")
            }
        }
    }

    /// Mean and covariance of `s(y)`; central finite differences of `log Z` on the transfer route.
    pub fn moments(&self, theta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        match self {
            PartitionOracle::Enumerated(e) => e.moments(theta),
            PartitionOracle::Transfer { .. } => {
                let t = theta[0];
                let up = self.log_z(&[t + FD_STEP]);
                let mid = self.log_z(&[t]);
                let dn = self.log_z(&[t - FD_STEP]);
                let mean = (up - dn) / (2.0 * FD_STEP);
                let var = (up - 2.0 * mid + dn) / (FD_STEP * FD_STEP);
                (vec![mean], DMatrix::from_element(1, 1, var))
            }
        }
    }
}

/// Exact mean and covariance of the sufficient statistics at `theta`.
pub fn exact_moments(model: &GrfModel, theta: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if theta.len() != model.dim() {
        return Err(GrfError::invalid("theta dimension does not match the model"));
    }
    Ok(PartitionOracle::for_model(model)?.moments(theta))
}

/// Normalised posterior density of a one-parameter model on a grid.
#[derive(Clone, Debug)]
pub struct PosteriorGrid {
    pub theta_grid: Vec<f64>,
    /// `log q(y) - log Z + log prior` at each grid point.
    pub log_unnorm: Vec<f64>,
    /// `log` of the trapezoid normaliser.
    pub log_normalizer: f64,
    pub density: Vec<f64>,
}

impl PosteriorGrid {
    /// Normalises an arbitrary log density given on a strictly increasing grid.
    pub fn from_log_unnorm(theta_grid: Vec<f64>, log_unnorm: Vec<f64>) -> Result<Self> {
        if theta_grid.len() < 2 || theta_grid.len() != log_unnorm.len() {
            return Err(GrfError::invalid("grid needs at least two points and matching values"));
        }
        if theta_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GrfError::invalid("theta grid must be strictly increasing"));
        }
        let max = log_unnorm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(GrfError::invalid("log density is not finite on the grid"));
        }
        let scaled: Vec<f64> = log_unnorm.iter().map(|l| (l - max).exp()).collect();
        let log_normalizer = max + trapezoid(&theta_grid, &scaled).ln();
        let density = log_unnorm.iter().map(|l| (l - log_normalizer).exp()).collect();
        Ok(Self {
            theta_grid,
            log_unnorm,
            log_normalizer,
            density,
        })
    }

    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn len(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_grid.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.theta_grid[self.len() - 1] - self.theta_grid[0]) / (self.len() - 1) as f64
    }

    pub fn argmax(&self) -> f64 {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        self.theta_grid[i]
    }

    /// Cumulative trapezoid integral at each grid point.
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.len() {
            acc += 0.5 * (self.theta_grid[i] - self.theta_grid[i - 1]) * (self.density[i] + self.density[i - 1]);
            out.push(acc);
        }
        out
    }

    /// Inverse of the piecewise-quadratic trapezoid CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let cdf = self.cdf();
        let p = p.clamp(0.0, 1.0) * cdf[cdf.len() - 1];
        let k = cdf.partition_point(|&c| c < p).clamp(1, self.len() - 1);
        let (x0, x1) = (self.theta_grid[k - 1], self.theta_grid[k]);
        let (d0, d1) = (self.density[k - 1], self.density[k]);
        let target = p - cdf[k - 1];
        let width = x1 - x0;
        let slope = (d1 - d0) / width;
        // Solve d0 t + slope t^2 / 2 = target for t in [0, width].
        let t = if slope.abs() < 1e-12 * (d0.abs() + 1.0) {
            if d0 > 0.0 { target / d0 } else { 0.0 }
        } else {
            let disc = (d0 * d0 + 2.0 * slope * target).max(0.0);
            (-d0 + disc.sqrt()) / slope
        };
        x0 + t.clamp(0.0, width)
    }
}

/// Posterior of a one-parameter model at every grid point, normalised by the trapezoid rule.
pub fn exact_posterior_grid(model: &GrfModel, y: &GrfState, grid: &[f64]) -> Result<PosteriorGrid> {
    if model.dim() != 1 {
        return Err(GrfError::invalid("grid posteriors need a one-parameter model"));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GrfError::invalid("theta grid must be strictly increasing"));
    }
    let s = model.suff_stats(y)?[0];
    let oracle = PartitionOracle::for_model(model)?;
    let prior = model.prior();
    let log_unnorm: Vec<f64> = grid
        .par_iter()
        .map(|&t| t * s - oracle.log_z(&[t]) + prior.log_density_normalized(&[t]))
        .collect();
    PosteriorGrid::from_log_unnorm(grid.to_vec(), log_unnorm)
}

/// Trapezoid posterior mean and standard deviation.
pub fn grid_summaries(grid: &PosteriorGrid) -> (f64, f64) {
    let x = &grid.theta_grid;
    let first: Vec<f64> = x.iter().zip(&grid.density).map(|(t, d)| t * d).collect();
    let mean = trapezoid(x, &first);
    let second: Vec<f64> = x.iter().zip(&grid.density).map(|(t, d)| (t - mean) * (t - mean) * d).collect();
    (mean, trapezoid(x, &second).max(0.0).sqrt())
}
