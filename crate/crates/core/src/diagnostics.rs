//! Trace summaries: moments, autocorrelation, effective sample size and
//! comparisons against exact grid posteriors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::error::{GrfError, Result};
use crate::numeric::mean;
use crate::oracle::{grid_summaries, PosteriorGrid};
use crate::samplers::Trace;

pub const DEFAULT_BURN_IN: f64 = 0.2;
pub const DEFAULT_MAX_LAG: usize = 50;

/// Autocorrelations at lags `0..=max_lag` (biased autocovariance over `n`, divided by lag 0).
/// A constant series yields `[1, 0, 0, ...]`.
pub fn acf(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|c| c * c).sum::<f64>() / n as f64;
    let mut out = vec![1.0];
    for lag in 1..=max_lag.min(n.saturating_sub(1)) {
        if c0 == 0.0 {
            out.push(0.0);
            continue;
        }
        let c: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        out.push(c / c0);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub ess: f64,
    /// The series is constant; `ess` is reported as `n`.
    pub degenerate: bool,
}

/// `n / (1 + 2 sum_l acf_l)`, summing until the first negative autocorrelation. Capped at `n`.
pub fn effective_sample_size(xs: &[f64]) -> Ess {
    let n = xs.len();
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|c| c * c).sum::<f64>();
    if n < 2 || c0 == 0.0 || !c0.is_finite() {
        return Ess {
            ess: n as f64,
            degenerate: true,
        };
    }
    let mut sum = 0.0;
    for lag in 1..n {
        let c: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
        let rho = c / c0;
        if rho < 0.0 {
            break;
        }
        sum += rho;
    }
    Ess {
        ess: (n as f64 / (1.0 + 2.0 * sum)).min(n as f64),
        degenerate: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub n_samples: usize,
    pub burn_in: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Per parameter, lags `0..=max_lag`.
    pub acf: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// `sd / sqrt(ess)` per parameter.
    pub mc_se: Vec<f64>,
    pub acceptance_rate: f64,
    /// `mean - grid mean`, for one-parameter traces with a grid.
    pub bias: Option<Vec<f64>>,
}

/// Summary after discarding the first 20% of the trace.
pub fn trace_summaries(trace: &Trace, grid: Option<&PosteriorGrid>) -> Result<TraceSummary> {
    summarize(trace, DEFAULT_BURN_IN, DEFAULT_MAX_LAG, grid)
}

pub fn summarize(trace: &Trace, burn_in_fraction: f64, max_lag: usize, grid: Option<&PosteriorGrid>) -> Result<TraceSummary> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(GrfError::invalid("burn-in fraction must lie in [0, 1)"));
    }
    if trace.len() < 10 {
        return Err(GrfError::invalid(format!("trace has {} states; at least 10 are needed", trace.len())));
    }
    let burn_in = (burn_in_fraction * trace.len() as f64).floor() as usize;
    let n = trace.len() - burn_in;
    if n == 0 {
        return Err(GrfError::invalid("nothing left after burn-in"));
    }
    let dim = trace.dim();
    if grid.is_some() && dim != 1 {
        return Err(GrfError::invalid("a grid posterior only applies to one-parameter traces"));
    }
    let mut out = TraceSummary {
        n_samples: n,
        burn_in,
        mean: Vec::with_capacity(dim),
        sd: Vec::with_capacity(dim),
        acf: Vec::with_capacity(dim),
        ess: Vec::with_capacity(dim),
        degenerate: Vec::with_capacity(dim),
        mc_se: Vec::with_capacity(dim),
        acceptance_rate: trace.acceptance_rate(),
        bias: None,
    };
    for k in 0..dim {
        let xs: Vec<f64> = trace.states[burn_in..].iter().map(|s| s[k]).collect();
        let m = mean(&xs);
        let sd = crate::numeric::variance(&xs).sqrt();
        let e = effective_sample_size(&xs);
        out.mean.push(m);
        out.sd.push(sd);
        out.acf.push(acf(&xs, max_lag));
        out.mc_se.push(sd / e.ess.sqrt());
        out.ess.push(e.ess);
        out.degenerate.push(e.degenerate);
    }
    if let Some(g) = grid {
        out.bias = Some(vec![out.mean[0] - grid_summaries(g).0]);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub observed: Vec<usize>,
    pub expected: Vec<f64>,
    /// Per-bin variance inflation `n / ESS` of the bin indicator (1 for independent draws).
    pub inflation: Vec<f64>,
}

/// Goodness of fit of correlated draws to a grid posterior over `bins` equal-probability
/// bins. Each bin's Pearson term is divided by the integrated autocorrelation time of its
/// indicator series, so a Markov chain is compared on its effective sample size.
pub fn chi_squared_vs_grid(samples: &[f64], grid: &PosteriorGrid, bins: usize) -> Result<ChiSquaredReport> {
    chi_squared_impl(samples, grid, bins, true)
}

/// The plain Pearson test, for independent draws.
pub fn chi_squared_iid(samples: &[f64], grid: &PosteriorGrid, bins: usize) -> Result<ChiSquaredReport> {
    chi_squared_impl(samples, grid, bins, false)
}

fn chi_squared_impl(samples: &[f64], grid: &PosteriorGrid, bins: usize, adjust: bool) -> Result<ChiSquaredReport> {
    if bins < 2 || samples.len() < 5 * bins {
        return Err(GrfError::invalid("need at least 2 bins and 5 samples per bin"));
    }
    let edges: Vec<f64> = (1..bins).map(|b| grid.quantile(b as f64 / bins as f64)).collect();
    let bin_of = |x: f64| edges.partition_point(|&e| e <= x);
    let labels: Vec<usize> = samples.iter().map(|&x| bin_of(x)).collect();
    let n = samples.len() as f64;
    let mut observed = vec![0usize; bins];
    for &b in &labels {
        observed[b] += 1;
    }
    let expected = vec![n / bins as f64; bins];
    let inflation: Vec<f64> = (0..bins)
        .map(|b| {
            if !adjust {
                return 1.0;
            }
            let ind: Vec<f64> = labels.iter().map(|&l| (l == b) as u8 as f64).collect();
            let e = effective_sample_size(&ind);
            if e.degenerate {
                1.0
            } else {
                (n / e.ess).max(1.0)
            }
        })
        .collect();
    let statistic: f64 = (0..bins)
        .map(|b| (observed[b] as f64 - expected[b]).powi(2) / (expected[b] * inflation[b]))
        .sum();
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| GrfError::invalid(e.to_string()))?;
    Ok(ChiSquaredReport {
        statistic,
        dof,
        p_value: dist.sf(statistic),
        observed,
        expected,
        inflation,
    })
}

/// Two-sided sign test of a zero median; zeros are dropped.
pub fn sign_test_p(values: &[f64]) -> f64 {
    let pos = values.iter().filter(|&&v| v > 0.0).count() as u64;
    let neg = values.iter().filter(|&&v| v < 0.0).count() as u64;
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * b.cdf(pos.min(neg))).min(1.0)
}

/// Total variation between a histogram of `samples` and the grid posterior, on grid cells.
pub fn histogram_tv_vs_grid(samples: &[f64], grid: &PosteriorGrid) -> f64 {
    let g = &grid.theta_grid;
    let m = g.len();
    let mut counts = vec![0.0; m];
    for &x in samples {
        let i = g.partition_point(|&t| t < x).min(m - 1);
        let j = if i > 0 && (x - g[i - 1]).abs() <= (g[i] - x).abs() { i - 1 } else { i };
        counts[j] += 1.0;
    }
    let total = samples.len() as f64;
    let w: Vec<f64> = grid.density.iter().map(|d| d * grid.spacing()).collect();
    let wsum: f64 = w.iter().sum();
    0.5 * counts.iter().zip(&w).map(|(c, p)| (c / total - p / wsum).abs()).sum::<f64>()
}
