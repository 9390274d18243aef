use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};
use crate::models::{GrfModel, GrfState, ParamVec};
use crate::rng::{seeded, ChainRng};

use super::{Algorithm, Budget, Sampler, SamplerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algorithm: Algorithm,
    pub model: String,
    pub config: SamplerConfig,
    pub seed: u64,
}

/// Chain output. Row 0 is the initial state (never "accepted", zero elapsed time).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub states: Vec<ParamVec>,
    pub accepted: Vec<bool>,
    /// Wall time of each iteration in nanoseconds.
    pub elapsed_ns: Vec<u64>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    /// Component `k` of every state, initial state included.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[k]).collect()
    }

    /// Fraction of accepted moves over iterations `1..`.
    pub fn acceptance_rate(&self) -> f64 {
        let n = self.iterations();
        if n == 0 {
            return 0.0;
        }
        self.accepted[1..].iter().filter(|&&a| a).count() as f64 / n as f64
    }

    pub fn total_seconds(&self) -> f64 {
        self.elapsed_ns.iter().sum::<u64>() as f64 * 1e-9
    }

    /// Same states and accept flags; timings are ignored.
    pub fn same_chain(&self, other: &Trace) -> bool {
        self.states == other.states && self.accepted == other.accepted
    }

    /// CSV with columns `iter, theta_0..theta_{m-1}, accepted, elapsed_ns`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string()];
        header.extend((0..self.dim()).map(|k| format!("theta_{k}")));
        header.push("accepted".into());
        header.push("elapsed_ns".into());
        w.write_record(&header)?;
        for (i, ((s, a), t)) in self.states.iter().zip(&self.accepted).zip(&self.elapsed_ns).enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(s.iter().map(|v| format!("{v:e}")));
            row.push(if *a { "1" } else { "0" }.into());
            row.push(t.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| GrfError::io("<trace>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| GrfError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

impl Sampler<'_> {
    /// Runs `algorithm` from the configured starting point with the given stream.
    pub fn run(&self, algorithm: Algorithm, rng: &mut ChainRng) -> Result<Trace> {
        let config = self.config();
        let mut state = self.initial_state(algorithm, self.initial_theta(), rng);
        let capacity = match config.budget {
            Budget::Iterations(n) => n + 1,
            Budget::Seconds(_) => 1024,
        };
        let mut states = Vec::with_capacity(capacity);
        let mut accepted = Vec::with_capacity(capacity);
        let mut elapsed_ns = Vec::with_capacity(capacity);
        states.push(state.theta.clone());
        accepted.push(false);
        elapsed_ns.push(0);

        let start = Instant::now();
        let mut iter = 0usize;
        loop {
            let done = match config.budget {
                Budget::Iterations(n) => iter >= n,
                Budget::Seconds(s) => start.elapsed().as_secs_f64() >= s,
            };
            if done {
                break;
            }
            let t0 = Instant::now();
            let acc = self.step(algorithm, &mut state, rng)?;
            elapsed_ns.push(t0.elapsed().as_nanos() as u64);
            states.push(state.theta.clone());
            accepted.push(acc);
            iter += 1;
        }
        Ok(Trace {
            states,
            accepted,
            elapsed_ns,
            meta: TraceMeta {
                algorithm,
                model: self.model().describe(),
                config: config.clone(),
                seed: config.seed,
            },
        })
    }
}

/// Runs one chain of `algorithm` on data `y`, seeded from `config.seed`.
pub fn run_chain(algorithm: Algorithm, model: &GrfModel, y: &GrfState, config: &SamplerConfig) -> Result<Trace> {
    let sampler = Sampler::new(model, y, config.clone())?.prepare(algorithm)?;
    let mut rng = seeded(config.seed);
    sampler.run(algorithm, &mut rng)
}
