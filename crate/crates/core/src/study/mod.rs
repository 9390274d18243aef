//! Experiment drivers: the Ising bias study, the ERGM posterior table, and report emission.
//!
//! Every dataset and run draws from its own stream of the master seed, so a study is
//! reproducible from its configuration alone and each run can be replayed on its own from
//! the sampler configuration recorded in the manifest.

mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{sign_test_p, summarize, TraceSummary};
use crate::error::{GrfError, Result};
use crate::io::{format_graph, format_lattice};
use crate::models::{ErgmStat, GaussianPrior, GrfModel, GrfState, StatSet, UndirectedGraph};
use crate::numeric::{linspace, mean, variance};
use crate::oracle::{exact_posterior_grid, grid_summaries};
use crate::rng::{chain_rng, stream_seed};
use crate::samplers::{draw_auxiliary, Algorithm, Budget, Sampler, SamplerConfig, Trace};
use crate::tuning::{tune, TuneConfig, TuningArtifact};

pub use svg::{boxplot, series_chart};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: -1.0,
            max: 1.5,
            points: 1001,
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.max > self.min) || self.points < 2 {
            return Err(GrfError::Config("grid needs min < max and at least two points".into()));
        }
        Ok(linspace(self.min, self.max, self.points))
    }
}

fn default_n_aux() -> BTreeMap<Algorithm, usize> {
    [
        (Algorithm::NoisyExchange, 100),
        (Algorithm::NoisyLangevin, 100),
        (Algorithm::MalaExchange, 100),
        (Algorithm::NoisyMalaExchange, 100),
    ]
    .into_iter()
    .collect()
}

/// Ising bias study: simulate lattices at `true_theta`, compare each sampler's posterior
/// mean with the exact grid mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub n_datasets: usize,
    pub height: usize,
    pub width: usize,
    pub true_theta: f64,
    pub prior_variance: f64,
    pub algorithms: Vec<Algorithm>,
    pub budget: Budget,
    /// Auxiliary draws per iteration; algorithms not listed use 1.
    pub n_aux: BTreeMap<Algorithm, usize>,
    pub aux_burnin: usize,
    pub aux_thin: usize,
    /// Gibbs sweeps used to simulate each dataset.
    pub data_sweeps: usize,
    /// Random-walk SD as a multiple of the exact posterior SD.
    pub rw_scale_factor: f64,
    /// Langevin/MALA step variance as a multiple of the exact posterior variance.
    pub step_scale: f64,
    pub grid: GridSpec,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_datasets: 20,
            height: 8,
            width: 8,
            true_theta: 0.3,
            prior_variance: 100.0,
            algorithms: Algorithm::ALL.to_vec(),
            budget: Budget::Iterations(10_000),
            n_aux: default_n_aux(),
            aux_burnin: 1000,
            aux_thin: 4,
            data_sweeps: 2000,
            rw_scale_factor: 2.4,
            step_scale: 1.0,
            grid: GridSpec::default(),
            burn_in_fraction: 0.2,
            seed: 0,
            out_dir: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(GrfError::Config("n_datasets must be at least 1".into()));
        }
        if self.height == 0 || self.width == 0 || self.height.min(self.width) > 20 {
            return Err(GrfError::Config(format!(
                "{}x{} lattice is outside the exact oracle's range (shorter side at most 20)",
                self.height, self.width
            )));
        }
        if !(self.rw_scale_factor > 0.0 && self.step_scale > 0.0) {
            return Err(GrfError::Config("rw_scale_factor and step_scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(GrfError::Config("burn_in_fraction must lie in [0, 1)".into()));
        }
        self.grid.values().map(|_| ())
    }
}

fn n_aux_for(map: &BTreeMap<Algorithm, usize>, a: Algorithm) -> usize {
    map.get(&a).copied().unwrap_or(1)
}

/// Stream index of algorithm `a` within a dataset (0 is the data itself).
fn algorithm_stream(a: Algorithm) -> u64 {
    1 + Algorithm::ALL.iter().position(|&b| b == a).expect("listed algorithm") as u64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub index: usize,
    pub suff_stats: Vec<f64>,
    pub exact_mean: Option<f64>,
    pub exact_sd: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: usize,
    pub algorithm: Algorithm,
    /// Complete sampler configuration, including the run's seed: `run` with this
    /// configuration on the dataset file reproduces the trace.
    pub config: SamplerConfig,
    pub summary: TraceSummary,
    pub seconds: f64,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    IsingBias,
    Ergm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub master_seed: u64,
    pub model: GrfModel,
    pub param_names: Vec<String>,
    pub config: serde_json::Value,
    pub tuning: Option<TuningArtifact>,
    pub datasets: Vec<DatasetInfo>,
    pub runs: Vec<RunRecord>,
    #[serde(skip)]
    pub data: Vec<GrfState>,
    pub algorithms: Vec<Algorithm>,
}

/// Aggregate bias of one algorithm across datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasAggregate {
    pub algorithm: Algorithm,
    pub n: usize,
    pub mean_bias: f64,
    pub median_bias: f64,
    pub mean_abs_bias: f64,
    /// Standard error of `mean_abs_bias` across datasets.
    pub se_abs_bias: f64,
    pub sign_test_p: f64,
}

impl StudyReport {
    /// Per-algorithm bias aggregates, in the order of `algorithms`.
    pub fn bias_table(&self) -> Vec<BiasAggregate> {
        self.algorithms
            .iter()
            .filter_map(|&a| {
                let biases: Vec<f64> = self
                    .runs
                    .iter()
                    .filter(|r| r.algorithm == a)
                    .filter_map(|r| r.summary.bias.as_ref().map(|b| b[0]))
                    .collect();
                if biases.is_empty() {
                    return None;
                }
                let abs: Vec<f64> = biases.iter().map(|b| b.abs()).collect();
                let mut sorted = biases.clone();
                sorted.sort_by(f64::total_cmp);
                let k = sorted.len();
                let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
                Some(BiasAggregate {
                    algorithm: a,
                    n: k,
                    mean_bias: mean(&biases),
                    median_bias: median,
                    mean_abs_bias: mean(&abs),
                    se_abs_bias: (variance(&abs) / k as f64).sqrt(),
                    sign_test_p: sign_test_p(&biases),
                })
            })
            .collect()
    }

    pub fn runs_for(&self, a: Algorithm) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.algorithm == a)
    }
}

fn run_one(
    model: &GrfModel,
    y: &GrfState,
    algorithm: Algorithm,
    config: SamplerConfig,
    dataset: usize,
    burn_in: f64,
    grid: Option<&crate::oracle::PosteriorGrid>,
) -> Result<RunRecord> {
    let sampler = Sampler::new(model, y, config.clone())?.prepare(algorithm)?;
    let trace = sampler.run(algorithm, &mut crate::rng::seeded(config.seed))?;
    let summary = summarize(&trace, burn_in, crate::diagnostics::DEFAULT_MAX_LAG, grid)?;
    Ok(RunRecord {
        dataset,
        algorithm,
        config,
        summary,
        seconds: trace.total_seconds(),
        trace: Some(trace),
    })
}

/// Runs the Ising bias study. Dataset `d` is simulated on stream 0 of `stream_seed(seed, d)`;
/// algorithm `a` runs on the stream of its position in [`Algorithm::ALL`].
pub fn ising_bias_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let prior = GaussianPrior::isotropic(1, config.prior_variance)?;
    let model = GrfModel::ising(config.height, config.width, prior)?;
    let grid_values = config.grid.values()?;
    let data_config = SamplerConfig {
        aux_burnin: config.data_sweeps,
        ..SamplerConfig::default()
    };

    let per_dataset: Vec<Result<(GrfState, DatasetInfo, Vec<RunRecord>)>> = (0..config.n_datasets)
        .into_par_iter()
        .map(|d| {
            let dseed = stream_seed(config.seed, d as u64);
            let y = draw_auxiliary(&model, &[config.true_theta], &data_config, 1, &mut chain_rng(dseed, 0))
                .pop()
                .expect("one draw");
            let grid = exact_posterior_grid(&model, &y, &grid_values)?;
            let (gmean, gsd) = grid_summaries(&grid);
            let info = DatasetInfo {
                index: d,
                suff_stats: model.suff_stats(&y)?.0,
                exact_mean: Some(gmean),
                exact_sd: Some(gsd),
            };
            let mut runs = Vec::with_capacity(config.algorithms.len());
            for &a in &config.algorithms {
                let run_config = SamplerConfig {
                    n_aux: n_aux_for(&config.n_aux, a),
                    aux_burnin: config.aux_burnin,
                    aux_thin: config.aux_thin,
                    step_matrix: Some(vec![vec![config.step_scale * gsd * gsd]]),
                    rw_scale: config.rw_scale_factor * gsd,
                    seed: stream_seed(dseed, algorithm_stream(a)),
                    budget: config.budget,
                    initial_theta: None,
                };
                runs.push(run_one(&model, &y, a, run_config, d, config.burn_in_fraction, Some(&grid))?);
            }
            Ok((y, info, runs))
        })
        .collect();

    let mut data = Vec::with_capacity(config.n_datasets);
    let mut datasets = Vec::with_capacity(config.n_datasets);
    let mut runs = Vec::new();
    for r in per_dataset {
        let (y, info, rs) = r?;
        data.push(y);
        datasets.push(info);
        runs.extend(rs);
    }
    Ok(StudyReport {
        kind: StudyKind::IsingBias,
        master_seed: config.seed,
        param_names: model.param_names(),
        model,
        config: serde_json::to_value(config)?,
        tuning: None,
        datasets,
        runs,
        data,
        algorithms: config.algorithms.clone(),
    })
}

/// ERGM posterior summaries for a single observed graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgmStudyConfig {
    pub stats: Vec<ErgmStat>,
    pub prior_variance: f64,
    pub algorithms: Vec<Algorithm>,
    pub budget: Budget,
    pub n_aux: BTreeMap<Algorithm, usize>,
    pub aux_burnin: usize,
    pub aux_thin: usize,
    pub rw_scale: f64,
    /// Output of `tune`; required by the gradient-based algorithms unless `tune_inline` is set.
    pub tuning: Option<TuningArtifact>,
    pub tune_inline: bool,
    pub tune: TuneConfig,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ErgmStudyConfig {
    fn default() -> Self {
        Self {
            stats: vec![ErgmStat::Edges, ErgmStat::TwoStars],
            prior_variance: 100.0,
            algorithms: vec![
                Algorithm::Exchange,
                Algorithm::NoisyExchange,
                Algorithm::NoisyLangevin,
                Algorithm::MalaExchange,
                Algorithm::NoisyMalaExchange,
            ],
            budget: Budget::Iterations(10_000),
            n_aux: default_n_aux(),
            aux_burnin: 1000,
            aux_thin: 4,
            rw_scale: 0.1,
            tuning: None,
            tune_inline: false,
            tune: TuneConfig::default(),
            burn_in_fraction: 0.2,
            seed: 0,
            out_dir: None,
        }
    }
}

/// Stream used by inline tuning (past every algorithm stream).
const TUNING_STREAM: u64 = 100;

pub fn ergm_study(config: &ErgmStudyConfig, graph: &UndirectedGraph) -> Result<StudyReport> {
    if !(0.0..1.0).contains(&config.burn_in_fraction) {
        return Err(GrfError::Config("burn_in_fraction must lie in [0, 1)".into()));
    }
    let stats = StatSet::new(config.stats.iter().copied())?;
    let prior = GaussianPrior::isotropic(stats.len(), config.prior_variance)?;
    let model = GrfModel::ergm(graph.n_nodes(), stats, prior)?;
    let y = GrfState::Graph(graph.clone());
    let needs_tuning = config.algorithms.iter().any(|a| a.needs_step_matrix());
    let tuning = match (&config.tuning, needs_tuning, config.tune_inline) {
        (Some(t), _, _) => Some(t.clone()),
        (None, true, true) => Some(tune(&model, &y, &config.tune, stream_seed(config.seed, TUNING_STREAM))?),
        (None, true, false) => {
            return Err(GrfError::Config(
                "gradient-based algorithms need a step matrix: run `tune` and pass its output as \
                 `tuning`, or set `tune_inline`"
                    .into(),
            ))
        }
        (None, false, _) => None,
    };
    if let Some(t) = &tuning {
        if t.theta_star.len() != model.dim() {
            return Err(GrfError::Config(format!(
                "tuning artifact has {} parameters, the model has {}",
                t.theta_star.len(),
                model.dim()
            )));
        }
    }
    let mut runs = Vec::with_capacity(config.algorithms.len());
    for &a in &config.algorithms {
        let run_config = SamplerConfig {
            n_aux: n_aux_for(&config.n_aux, a),
            aux_burnin: config.aux_burnin,
            aux_thin: config.aux_thin,
            step_matrix: tuning.as_ref().map(|t| t.sigma.clone()),
            rw_scale: config.rw_scale,
            seed: stream_seed(config.seed, algorithm_stream(a)),
            budget: config.budget,
            initial_theta: tuning.as_ref().map(|t| t.theta_star.clone()),
        };
        runs.push(run_one(&model, &y, a, run_config, 0, config.burn_in_fraction, None)?);
    }
    Ok(StudyReport {
        kind: StudyKind::Ergm,
        master_seed: config.seed,
        param_names: model.param_names(),
        datasets: vec![DatasetInfo {
            index: 0,
            suff_stats: model.suff_stats(&y)?.0,
            exact_mean: None,
            exact_sd: None,
        }],
        model,
        config: serde_json::to_value(config)?,
        tuning,
        runs,
        data: vec![y],
        algorithms: config.algorithms.clone(),
    })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| GrfError::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn data_file_name(report: &StudyReport, d: usize) -> String {
    let ext = match report.data.get(d) {
        Some(GrfState::Graph(_)) => "edges",
        _ => "lattice",
    };
    format!("data/dataset_{d:03}.{ext}")
}

/// Post-burn-in histogram density of one parameter on 40 shared bins.
fn density(xs: &[f64], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    const BINS: usize = 40;
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let mut counts = vec![0usize; BINS];
    for &x in xs {
        counts[(((x - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / (xs.len() as f64 * width)))
        .collect()
}

/// Writes the report into `out_dir`: `manifest.json` always; with at least one run also
/// `summary.csv`, `acf.csv`, `density.csv`, the study table, SVG plots and the data files.
/// Tables contain no timings, so they are byte-identical across replays. Returns the paths.
pub fn emit_report(report: &StudyReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| GrfError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, content: &str| -> Result<()> {
        let path = out_dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| GrfError::io(parent, e))?;
        }
        write_file(&path, content)?;
        written.push(path);
        Ok(())
    };

    let has_runs = !report.runs.is_empty();
    let manifest = serde_json::json!({
        "kind": report.kind,
        "master_seed": report.master_seed,
        "crate": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "model": report.model,
        "config": report.config,
        "tuning": report.tuning,
        "datasets": report.datasets.iter().map(|d| serde_json::json!({
            "index": d.index,
            "file": if has_runs { Some(data_file_name(report, d.index)) } else { None },
            "suff_stats": d.suff_stats,
            "exact_mean": d.exact_mean,
            "exact_sd": d.exact_sd,
        })).collect::<Vec<_>>(),
        "runs": report.runs.iter().map(|r| serde_json::json!({
            "dataset": r.dataset,
            "algorithm": r.algorithm,
            "config": r.config,
            "seconds": r.seconds,
        })).collect::<Vec<_>>(),
    });
    put("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    if !has_runs {
        return Ok(written);
    }

    for (d, y) in report.data.iter().enumerate() {
        let text = match y {
            GrfState::Lattice(l) => format_lattice(l),
            GrfState::Graph(g) => format_graph(g),
        };
        put(&data_file_name(report, d), &text)?;
    }

    let names = &report.param_names;
    let mut summary = String::from("dataset,algorithm,param,mean,sd,ess,mc_se,acceptance,exact_mean,bias\n");
    let mut acf = String::from("dataset,algorithm,param,lag,acf\n");
    for r in &report.runs {
        let exact = report.datasets.get(r.dataset).and_then(|d| d.exact_mean);
        for (k, name) in names.iter().enumerate() {
            let s = &r.summary;
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{},{},{},{}",
                r.dataset,
                r.algorithm,
                name,
                s.mean[k],
                s.sd[k],
                s.ess[k],
                s.mc_se[k],
                s.acceptance_rate,
                fmt_opt(exact),
                fmt_opt(s.bias.as_ref().map(|b| b[k]))
            );
            for (lag, v) in s.acf[k].iter().enumerate() {
                let _ = writeln!(acf, "{},{},{},{lag},{v}", r.dataset, r.algorithm, name);
            }
        }
    }
    put("summary.csv", &summary)?;
    put("acf.csv", &acf)?;

    // Densities and plots use dataset 0.
    let mut dens = String::from("dataset,algorithm,param,x,density\n");
    for (k, name) in names.iter().enumerate() {
        let samples: Vec<(Algorithm, Vec<f64>)> = report
            .runs
            .iter()
            .filter(|r| r.dataset == 0)
            .filter_map(|r| {
                r.trace
                    .as_ref()
                    .map(|t| (r.algorithm, t.states[r.summary.burn_in..].iter().map(|s| s[k]).collect()))
            })
            .collect();
        let all = samples.iter().flat_map(|(_, v)| v.iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let mut series = Vec::new();
        for (a, xs) in &samples {
            let d = density(xs, lo, hi);
            for &(x, p) in &d {
                let _ = writeln!(dens, "0,{a},{name},{x},{p}");
            }
            series.push((a.to_string(), d));
        }
        put(
            &format!("density_{name}.svg"),
            &series_chart(&format!("Posterior density of {name} (dataset 0)"), name, "density", &series, false),
        )?;
        let acf_series: Vec<(String, Vec<(f64, f64)>)> = report
            .runs
            .iter()
            .filter(|r| r.dataset == 0)
            .map(|r| {
                (
                    r.algorithm.to_string(),
                    r.summary.acf[k].iter().enumerate().map(|(l, &v)| (l as f64, v)).collect(),
                )
            })
            .collect();
        put(
            &format!("acf_{name}.svg"),
            &series_chart(&format!("Autocorrelation of {name} (dataset 0)"), "lag", "acf", &acf_series, true),
        )?;
    }
    put("density.csv", &dens)?;

    match report.kind {
        StudyKind::IsingBias => {
            let table = report.bias_table();
            let mut csv = String::from("algorithm,n,mean_bias,median_bias,mean_abs_bias,se_abs_bias,sign_test_p\n");
            for b in &table {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    b.algorithm, b.n, b.mean_bias, b.median_bias, b.mean_abs_bias, b.se_abs_bias, b.sign_test_p
                );
            }
            put("bias.csv", &csv)?;
            let groups: Vec<(String, Vec<f64>)> = report
                .algorithms
                .iter()
                .map(|&a| {
                    (
                        a.to_string(),
                        report.runs_for(a).filter_map(|r| r.summary.bias.as_ref().map(|b| b[0])).collect(),
                    )
                })
                .collect();
            put(
                "bias_boxplot.svg",
                &boxplot("Bias of the posterior mean across datasets", "bias", &groups, Some(0.0)),
            )?;
        }
        StudyKind::Ergm => {
            let mut csv = String::from("algorithm");
            for name in names {
                let _ = write!(csv, ",{name}_mean,{name}_sd");
            }
            csv.push('\n');
            for r in &report.runs {
                csv.push_str(r.algorithm.name());
                for k in 0..names.len() {
                    let _ = write!(csv, ",{},{}", r.summary.mean[k], r.summary.sd[k]);
                }
                csv.push('\n');
            }
            put("means.csv", &csv)?;
        }
    }
    Ok(written)
}
