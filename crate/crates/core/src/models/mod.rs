//! Gibbs random field likelihoods `f(y|theta) ∝ exp(theta' s(y))`.
//!
//! Two families are supported: the nearest-neighbour Ising model on a
//! rectangular lattice with free boundary, and undirected exponential random
//! graph models built from edges, two-stars, three-stars and triangles.
//! Each model carries a Gaussian prior and the bound `S = sup_y |s(y)|`.

mod graph;
mod lattice;
mod prior;

use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use graph::{dyad_at, dyad_index, ergm_suffstats, ErgmStat, StatSet, UndirectedGraph};
pub(crate) use graph::ergm_change_on;
pub use lattice::{ising_suffstat, SpinLattice};
pub use prior::{prior_log_grad_hess, GaussianPrior};

use crate::error::{GrfError, Result};

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl AsRef<[f64]> for $name {
            fn as_ref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl $name {
            pub fn zeros(dim: usize) -> Self {
                Self(vec![0.0; dim])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }
    };
}

real_vector!(
    /// Model parameter `theta`.
    ParamVec
);
real_vector!(
    /// Sufficient statistics `s(y)`.
    SuffStats
);

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelKind {
    Ising { height: usize, width: usize },
    Ergm { n_nodes: usize, stats: StatSet },
}

/// A configuration of the random field.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GrfState {
    Lattice(SpinLattice),
    Graph(UndirectedGraph),
}

/// One Gibbs-updatable coordinate: a lattice cell (row-major index) or a dyad `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Cell(usize),
    Dyad(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfModel {
    kind: ModelKind,
    prior: GaussianPrior,
    stat_bound: f64,
}

impl GrfModel {
    pub fn ising(height: usize, width: usize, prior: GaussianPrior) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(GrfError::invalid("lattice dimensions must be at least 1"));
        }
        if prior.dim() != 1 {
            return Err(GrfError::invalid("the Ising model has a single parameter"));
        }
        Ok(Self {
            kind: ModelKind::Ising { height, width },
            prior,
            stat_bound: SpinLattice::bond_count(height, width) as f64,
        })
    }

    pub fn ergm(n_nodes: usize, stats: StatSet, prior: GaussianPrior) -> Result<Self> {
        if n_nodes < 2 {
            return Err(GrfError::invalid("an ERGM needs at least two nodes"));
        }
        if prior.dim() != stats.len() {
            return Err(GrfError::invalid(format!(
                "prior dimension {} does not match {} statistics",
                prior.dim(),
                stats.len()
            )));
        }
        // Every supported count is maximised by the complete graph.
        let complete = {
            let mut g = UndirectedGraph::empty(n_nodes);
            for i in 0..n_nodes {
                for j in i + 1..n_nodes {
                    g.set_edge(i, j, true);
                }
            }
            g
        };
        let stat_bound = ergm_suffstats(&complete, &stats).iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            kind: ModelKind::Ergm { n_nodes, stats },
            prior,
            stat_bound,
        })
    }

    /// Ising model with the default `N(0, 100)` prior.
    pub fn ising_default(height: usize, width: usize) -> Result<Self> {
        Self::ising(height, width, GaussianPrior::isotropic(1, GaussianPrior::DEFAULT_VARIANCE)?)
    }

    /// ERGM with the default `N(0, 100)` prior on each parameter.
    pub fn ergm_default(n_nodes: usize, stats: StatSet) -> Result<Self> {
        let prior = GaussianPrior::isotropic(stats.len(), GaussianPrior::DEFAULT_VARIANCE)?;
        Self::ergm(n_nodes, stats, prior)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn with_prior(mut self, prior: GaussianPrior) -> Result<Self> {
        if prior.dim() != self.dim() {
            return Err(GrfError::invalid("prior dimension does not match the model"));
        }
        self.prior = prior;
        Ok(self)
    }

    /// `S = sup_y |s(y)|`.
    pub fn stat_bound(&self) -> f64 {
        self.stat_bound
    }

    /// Number of parameters / statistics `m`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Ising { .. } => 1,
            ModelKind::Ergm { stats, .. } => stats.len(),
        }
    }

    /// Number of binary coordinates: lattice cells or dyads.
    pub fn n_sites(&self) -> usize {
        match &self.kind {
            ModelKind::Ising { height, width } => height * width,
            ModelKind::Ergm { n_nodes, .. } => n_nodes * (n_nodes - 1) / 2,
        }
    }

    pub fn site_at(&self, k: usize) -> Site {
        match &self.kind {
            ModelKind::Ising { .. } => Site::Cell(k),
            ModelKind::Ergm { n_nodes, .. } => {
                let (i, j) = dyad_at(*n_nodes, k);
                Site::Dyad(i, j)
            }
        }
    }

    pub fn check_state(&self, y: &GrfState) -> Result<()> {
        match (&self.kind, y) {
            (ModelKind::Ising { height, width }, GrfState::Lattice(l)) => {
                if l.height() == *height && l.width() == *width {
                    Ok(())
                } else {
                    Err(GrfError::invalid(format!(
                        "lattice is {}x{}, model expects {height}x{width}",
                        l.height(),
                        l.width()
                    )))
                }
            }
            (ModelKind::Ergm { n_nodes, .. }, GrfState::Graph(g)) => {
                if g.n_nodes() == *n_nodes {
                    Ok(())
                } else {
                    Err(GrfError::invalid(format!(
                        "graph has {} nodes, model expects {n_nodes}",
                        g.n_nodes()
                    )))
                }
            }
            _ => Err(GrfError::invalid("state type does not match the model family")),
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(GrfError::invalid(format!(
                "theta has length {}, model has {} parameters",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(GrfError::invalid("theta has non-finite entries"));
        }
        Ok(())
    }

    pub fn suff_stats(&self, y: &GrfState) -> Result<SuffStats> {
        self.check_state(y)?;
        Ok(self.stats_unchecked(y))
    }

    pub(crate) fn stats_unchecked(&self, y: &GrfState) -> SuffStats {
        match (&self.kind, y) {
            (ModelKind::Ising { .. }, GrfState::Lattice(l)) => SuffStats(vec![ising_suffstat(l)]),
            (ModelKind::Ergm { stats, .. }, GrfState::Graph(g)) => SuffStats(ergm_suffstats(g, stats)),
            _ => unreachable!("state validated against model"),
        }
    }

    /// `log q_theta(y) = theta' s(y)`.
    pub fn unnorm_logdensity(&self, theta: &[f64], y: &GrfState) -> Result<f64> {
        self.check_theta(theta)?;
        let s = self.suff_stats(y)?;
        Ok(dot(theta, &s))
    }

    /// `s(y with site flipped) - s(y)`, computed from the local neighbourhood only.
    pub fn change_statistic(&self, y: &GrfState, site: Site) -> Result<SuffStats> {
        self.check_state(y)?;
        match (&self.kind, y, site) {
            (ModelKind::Ising { .. }, GrfState::Lattice(l), Site::Cell(k)) => {
                if k >= l.len() {
                    return Err(GrfError::invalid(format!("cell {k} out of range")));
                }
                let delta = -2.0 * l.spins()[k] as f64 * l.neighbor_sum(k) as f64;
                Ok(SuffStats(vec![delta]))
            }
            (ModelKind::Ergm { n_nodes, stats }, GrfState::Graph(g), Site::Dyad(i, j)) => {
                if !(i < j && j < *n_nodes) {
                    return Err(GrfError::invalid(format!("dyad ({i}, {j}) out of range")));
                }
                let mut out = vec![0.0; stats.len()];
                ergm_change_on(g, i, j, stats, &mut out);
                if g.has_edge(i, j) {
                    out.iter_mut().for_each(|v| *v = -*v);
                }
                Ok(SuffStats(out))
            }
            _ => Err(GrfError::invalid("site type does not match the model family")),
        }
    }

    /// Uniformly random configuration (independent fair coins per site).
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> GrfState {
        match &self.kind {
            ModelKind::Ising { height, width } => GrfState::Lattice(SpinLattice::random(*height, *width, rng)),
            ModelKind::Ergm { n_nodes, .. } => GrfState::Graph(UndirectedGraph::random(*n_nodes, 0.5, rng)),
        }
    }

    /// Configuration whose site bits are the bits of `code` (site `k` is bit `k`).
    pub(crate) fn state_from_code(&self, code: u64) -> GrfState {
        match &self.kind {
            ModelKind::Ising { height, width } => {
                let spins = (0..height * width)
                    .map(|k| if code >> k & 1 == 1 { 1 } else { -1 })
                    .collect();
                GrfState::Lattice(SpinLattice::new(*height, *width, spins).expect("valid spins"))
            }
            ModelKind::Ergm { n_nodes, .. } => {
                let mut g = UndirectedGraph::empty(*n_nodes);
                for k in 0..self.n_sites() {
                    if code >> k & 1 == 1 {
                        let (i, j) = dyad_at(*n_nodes, k);
                        g.set_edge(i, j, true);
                    }
                }
                GrfState::Graph(g)
            }
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            ModelKind::Ising { height, width } => format!("ising {height}x{width}"),
            ModelKind::Ergm { n_nodes, stats } => {
                let names: Vec<_> = stats.stats().iter().map(|s| s.name()).collect();
                format!("ergm n={n_nodes} [{}]", names.join(","))
            }
        }
    }

    /// Column labels for the parameters.
    pub fn param_names(&self) -> Vec<String> {
        match &self.kind {
            ModelKind::Ising { .. } => vec!["theta".into()],
            ModelKind::Ergm { stats, .. } => stats.stats().iter().map(|s| s.name().to_string()).collect(),
        }
    }
}
