use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use noisy_grf::bounds::verify_random_pairs;
use noisy_grf::io::{load_graph, load_lattice};
use noisy_grf::models::{ErgmStat, StatSet};
use noisy_grf::oracle::exact_posterior_grid;
use noisy_grf::samplers::{Algorithm, Sampler, SamplerConfig};
use noisy_grf::study::{emit_report, ergm_study, ising_bias_study, ErgmStudyConfig, GridSpec, StudyConfig};
use noisy_grf::tuning::{tune, TuneConfig, TuningArtifact};
use noisy_grf::{GaussianPrior, GrfError, GrfModel, GrfState};

#[derive(Parser)]
#[command(name = "noisy-grf", version, about = "Exact and noisy MCMC for Gibbs random fields")]
struct Cli {
    /// Master seed (overrides the seed in the configuration file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bias of each sampler against the exact posterior on simulated Ising lattices.
    IsingStudy,
    /// Posterior summaries of every configured sampler on one observed graph.
    ErgmRun {
        #[arg(long)]
        graph: PathBuf,
        /// Output of `tune`.
        #[arg(long)]
        tuning: Option<PathBuf>,
        /// Tune before running when no tuning file is given.
        #[arg(long)]
        tune_inline: bool,
    },
    /// Exact grid posterior of an Ising lattice.
    ExactPosterior {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        theta_min: f64,
        #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
        theta_max: f64,
        #[arg(long, default_value_t = 1001)]
        grid_points: usize,
        #[arg(long, default_value_t = 10.0)]
        prior_sd: f64,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Robbins-Monro mode, curvature and step scale for the gradient-based samplers.
    Tune {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One chain; writes the trace CSV.
    Run {
        #[arg(long)]
        algorithm: String,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks the perturbation bound on random finite-state kernel pairs.
    VerifyBounds {
        #[arg(long, default_value_t = 8)]
        states: usize,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 0.05)]
        kappa_max: f64,
        #[arg(long, default_value_t = 200)]
        n_max: usize,
        /// JSON destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKindArg {
    Ising,
    Ergm,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: ModelKindArg,
    /// Lattice file (ising) or edge list (ergm).
    #[arg(long)]
    data: PathBuf,
    /// ERGM statistics, comma separated.
    #[arg(long, default_value = "edges,two-stars")]
    stats: String,
    #[arg(long, default_value_t = 100.0)]
    prior_variance: f64,
}

impl ModelArgs {
    fn load(&self) -> Result<(GrfModel, GrfState), GrfError> {
        match self.model {
            ModelKindArg::Ising => {
                let l = load_lattice(&self.data)?;
                let prior = GaussianPrior::isotropic(1, self.prior_variance)?;
                Ok((GrfModel::ising(l.height(), l.width(), prior)?, GrfState::Lattice(l)))
            }
            ModelKindArg::Ergm => {
                let g = load_graph(&self.data)?;
                let stats = self
                    .stats
                    .split(',')
                    .map(|s| s.trim().parse::<ErgmStat>())
                    .collect::<Result<Vec<_>, _>>()?;
                let stats = StatSet::new(stats)?;
                let prior = GaussianPrior::isotropic(stats.len(), self.prior_variance)?;
                Ok((GrfModel::ergm(g.n_nodes(), stats, prior)?, GrfState::Graph(g)))
            }
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, GrfError> {
    let text = fs::read_to_string(path).map_err(|e| GrfError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| GrfError::Config(format!("{}: {e}", path.display())))
}

fn config_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, GrfError> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), GrfError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| GrfError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

enum Outcome {
    Ok,
    BoundViolation,
}

fn execute(cli: Cli) -> Result<Outcome, GrfError> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::IsingStudy => {
            let mut config: StudyConfig = config_or_default(config_path)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if cli.out_dir.is_some() {
                config.out_dir = cli.out_dir.clone();
            }
            let out = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("ising-study"));
            let report = ising_bias_study(&config)?;
            emit_report(&report, &out)?;
            println!("algorithm,n,mean_bias,mean_abs_bias,se_abs_bias,sign_test_p");
            for b in report.bias_table() {
                println!(
                    "{},{},{:.5},{:.5},{:.5},{:.4}",
                    b.algorithm, b.n, b.mean_bias, b.mean_abs_bias, b.se_abs_bias, b.sign_test_p
                );
            }
            eprintln!("report written to {}", out.display());
        }
        Command::ErgmRun {
            graph,
            tuning,
            tune_inline,
        } => {
            let mut config: ErgmStudyConfig = config_or_default(config_path)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(t) = tuning {
                config.tuning = Some(read_json::<TuningArtifact>(&t)?);
            }
            config.tune_inline |= tune_inline;
            if cli.out_dir.is_some() {
                config.out_dir = cli.out_dir.clone();
            }
            let out = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("ergm-run"));
            let g = load_graph(&graph)?;
            let report = ergm_study(&config, &g)?;
            emit_report(&report, &out)?;
            print!("{}", fs::read_to_string(out.join("means.csv")).map_err(|e| GrfError::io(out.join("means.csv"), e))?);
            eprintln!("report written to {}", out.display());
        }
        Command::ExactPosterior {
            lattice,
            theta_min,
            theta_max,
            grid_points,
            prior_sd,
            out,
        } => {
            let l = load_lattice(&lattice)?;
            if !(prior_sd > 0.0) {
                return Err(GrfError::Config("prior sd must be positive".into()));
            }
            let prior = GaussianPrior::isotropic(1, prior_sd * prior_sd)?;
            let model = GrfModel::ising(l.height(), l.width(), prior)?;
            let grid = GridSpec {
                min: theta_min,
                max: theta_max,
                points: grid_points,
            }
            .values()?;
            let post = exact_posterior_grid(&model, &GrfState::Lattice(l), &grid)?;
            let mut csv = String::from("theta,density\n");
            for (t, d) in post.theta_grid.iter().zip(&post.density) {
                csv.push_str(&format!("{t},{d}\n"));
            }
            write_out(out.as_deref(), &csv)?;
        }
        Command::Tune { model, out } => {
            let config: TuneConfig = config_or_default(config_path)?;
            let (m, y) = model.load()?;
            let artifact = tune(&m, &y, &config, cli.seed.unwrap_or(config.sampler.seed))?;
            write_out(Some(&out), &serde_json::to_string_pretty(&artifact)?)?;
            eprintln!(
                "theta* = {:?}, scale = {}, acceptance = {:?}",
                artifact.theta_star, artifact.scale, artifact.acceptance
            );
        }
        Command::Run { algorithm, model, out } => {
            let algorithm: Algorithm = algorithm.parse()?;
            let mut config: SamplerConfig = config_or_default(config_path)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let (m, y) = model.load()?;
            let sampler = Sampler::new(&m, &y, config.clone())?.prepare(algorithm)?;
            let trace = sampler.run(algorithm, &mut noisy_grf::rng::seeded(config.seed))?;
            trace.save_csv(&out)?;
            eprintln!(
                "{} iterations, acceptance rate {:.3}, {:.2} s",
                trace.iterations(),
                trace.acceptance_rate(),
                trace.total_seconds()
            );
        }
        Command::VerifyBounds {
            states,
            pairs,
            kappa_max,
            n_max,
            out,
        } => {
            let summary = verify_random_pairs(states, pairs, kappa_max, n_max, cli.seed.unwrap_or(0))?;
            let out = out.or_else(|| cli.out_dir.as_ref().map(|d| d.join("bounds.json")));
            if let Some(dir) = out.as_ref().and_then(|p| p.parent()).filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| GrfError::io(dir, e))?;
            }
            write_out(out.as_deref(), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
            if summary.violations > 0 {
                return Ok(Outcome::BoundViolation);
            }
        }
    }
    Ok(Outcome::Ok)
}

fn exit_code(err: &GrfError) -> u8 {
    match err {
        GrfError::Invalid(_)
        | GrfError::Config(_)
        | GrfError::Parse { .. }
        | GrfError::Serde(_)
        | GrfError::NotNegativeDefinite(_)
        | GrfError::Singular(_)
        | GrfError::OutOfRegime { .. } => 2,
        GrfError::OracleRefusal { .. } => 3,
        GrfError::BoundViolation(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::BoundViolation) => {
            eprintln!("error: perturbation bound violated");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
