use rand::Rng;

use crate::models::{dot, ergm_change_on, GrfModel, GrfState, ModelKind, Site, SuffStats};

use super::SamplerConfig;

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `u < p` for `u` uniform on the 53-bit grid in [0, 1), compared as integers.
#[inline]
fn threshold(p: f64) -> u64 {
    (p * (1u64 << 53) as f64).ceil() as u64
}

#[inline]
fn coin<R: Rng + ?Sized>(rng: &mut R, threshold: u64) -> bool {
    (rng.next_u64() >> 11) < threshold
}

/// Probability that `site` is "on" (spin +1 / edge present) given the rest of `state`.
pub fn conditional_on_probability(model: &GrfModel, theta: &[f64], state: &GrfState, site: Site) -> f64 {
    match (model.kind(), state, site) {
        (ModelKind::Ising { .. }, GrfState::Lattice(l), Site::Cell(k)) => {
            logistic(2.0 * theta[0] * l.neighbor_sum(k) as f64)
        }
        (ModelKind::Ergm { stats, .. }, GrfState::Graph(g), Site::Dyad(i, j)) => {
            let mut delta = [0.0; 4];
            ergm_change_on(g, i, j, stats, &mut delta[..stats.len()]);
            logistic(dot(theta, &delta[..stats.len()]))
        }
        _ => panic!("site {site:?} does not match the model family"),
    }
}

/// Resamples one site from its exact full conditional.
pub fn gibbs_site_update<R: Rng + ?Sized>(
    model: &GrfModel,
    theta: &[f64],
    state: &mut GrfState,
    site: Site,
    rng: &mut R,
) {
    let p = conditional_on_probability(model, theta, state, site);
    let on = coin(rng, threshold(p));
    match (state, site) {
        (GrfState::Lattice(l), Site::Cell(k)) => l.set(k, if on { 1 } else { -1 }),
        (GrfState::Graph(g), Site::Dyad(i, j)) => g.set_edge(i, j, on),
        _ => unreachable!(),
    }
}

/// Precomputed single-site kernel for one parameter value.
pub(crate) struct SweepKernel<'a> {
    model: &'a GrfModel,
    theta: &'a [f64],
    // Thresholds for P(+1) indexed by neighbour sum + 4 (edge and corner cells have odd sums).
    ising_table: [u64; 9],
}

impl<'a> SweepKernel<'a> {
    pub(crate) fn new(model: &'a GrfModel, theta: &'a [f64]) -> Self {
        let mut ising_table = [0; 9];
        if let ModelKind::Ising { .. } = model.kind() {
            for (idx, slot) in ising_table.iter_mut().enumerate() {
                let n = idx as i32 - 4;
                *slot = threshold(logistic(2.0 * theta[0] * n as f64));
            }
        }
        Self {
            model,
            theta,
            ising_table,
        }
    }

    /// One systematic-scan sweep over every site.
    pub(crate) fn sweep<R: Rng + ?Sized>(&self, state: &mut GrfState, rng: &mut R) {
        match (self.model.kind(), state) {
            (ModelKind::Ising { height, width }, GrfState::Lattice(l)) => {
                let (h, w) = (*height, *width);
                let spins = l.spins_mut();
                for r in 0..h {
                    for c in 0..w {
                        let k = r * w + c;
                        let mut sum = 4i32;
                        if c > 0 {
                            sum += spins[k - 1] as i32;
                        }
                        if c + 1 < w {
                            sum += spins[k + 1] as i32;
                        }
                        if r > 0 {
                            sum += spins[k - w] as i32;
                        }
                        if r + 1 < h {
                            sum += spins[k + w] as i32;
                        }
                        let on = coin(rng, self.ising_table[sum as usize]);
                        spins[k] = if on { 1 } else { -1 };
                    }
                }
            }
            (ModelKind::Ergm { n_nodes, stats }, GrfState::Graph(g)) => {
                let m = stats.len();
                let mut delta = [0.0; 4];
                for i in 0..*n_nodes {
                    for j in i + 1..*n_nodes {
                        ergm_change_on(g, i, j, stats, &mut delta[..m]);
                        let p = logistic(dot(self.theta, &delta[..m]));
                        let on = coin(rng, threshold(p));
                        g.set_edge(i, j, on);
                    }
                }
            }
            _ => panic!("state does not match the model family"),
        }
    }
}

/// Runs `sweeps` systematic Gibbs sweeps in place.
pub fn gibbs_sweeps<R: Rng + ?Sized>(model: &GrfModel, theta: &[f64], state: &mut GrfState, sweeps: usize, rng: &mut R) {
    let kernel = SweepKernel::new(model, theta);
    for _ in 0..sweeps {
        kernel.sweep(state, rng);
    }
}

fn collect_auxiliary<R, F>(model: &GrfModel, theta: &[f64], config: &SamplerConfig, count: usize, rng: &mut R, mut keep: F)
where
    R: Rng + ?Sized,
    F: FnMut(&GrfState),
{
    assert!(count >= 1, "auxiliary draw count must be at least 1");
    let kernel = SweepKernel::new(model, theta);
    let mut state = model.random_state(rng);
    for _ in 0..config.aux_burnin {
        kernel.sweep(&mut state, rng);
    }
    keep(&state);
    for _ in 1..count {
        for _ in 0..config.aux_thin {
            kernel.sweep(&mut state, rng);
        }
        keep(&state);
    }
}

/// Auxiliary draws from `f(.|theta)`: `aux_burnin` sweeps from a uniform start, then
/// `count` states spaced `aux_thin` sweeps apart. The first returned state is `y'_1`.
pub fn draw_auxiliary<R: Rng + ?Sized>(
    model: &GrfModel,
    theta: &[f64],
    config: &SamplerConfig,
    count: usize,
    rng: &mut R,
) -> Vec<GrfState> {
    let mut out = Vec::with_capacity(count);
    collect_auxiliary(model, theta, config, count, rng, |s| out.push(s.clone()));
    out
}

/// Same draws as [`draw_auxiliary`] (identical random stream) but only their statistics are kept.
pub fn draw_auxiliary_stats<R: Rng + ?Sized>(
    model: &GrfModel,
    theta: &[f64],
    config: &SamplerConfig,
    count: usize,
    rng: &mut R,
) -> Vec<SuffStats> {
    let mut out = Vec::with_capacity(count);
    collect_auxiliary(model, theta, config, count, rng, |s| out.push(model.stats_unchecked(s)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{SpinLattice, StatSet};
    use crate::oracle::{exact_moments, for_each_state, EnumeratedModel};
    use crate::rng::seeded;

    #[test]
    fn zero_parameter_is_a_fair_coin() {
        let ising = GrfModel::ising_default(3, 3).unwrap();
        let ergm = GrfModel::ergm_default(5, StatSet::all()).unwrap();
        let mut rng = seeded(1);
        for model in [&ising, &ergm] {
            let y = model.random_state(&mut rng);
            let theta = vec![0.0; model.dim()];
            for k in 0..model.n_sites() {
                assert_eq!(conditional_on_probability(model, &theta, &y, model.site_at(k)), 0.5);
            }
        }
    }

    #[test]
    fn strong_coupling_saturates() {
        let ising = GrfModel::ising_default(3, 3).unwrap();
        let y = GrfState::Lattice(SpinLattice::filled(3, 3, 1).unwrap());
        let p = conditional_on_probability(&ising, &[10.0], &y, Site::Cell(4));
        assert_eq!(p, 1.0 / (1.0 + (-80f64).exp()));
        assert!(1.0 - p < 1e-30);
    }

    #[test]
    fn fast_sweep_matches_site_updates() {
        // The table-driven sweep and the generic site update consume the stream identically.
        let mut rng_a = seeded(9);
        let mut rng_b = seeded(9);
        for model in [GrfModel::ising_default(4, 5).unwrap(), GrfModel::ergm_default(6, StatSet::all()).unwrap()] {
            let theta: Vec<f64> = (0..model.dim()).map(|k| 0.3 - 0.2 * k as f64).collect();
            let mut a = model.random_state(&mut rng_a);
            let mut b = model.random_state(&mut rng_b);
            gibbs_sweeps(&model, &theta, &mut a, 3, &mut rng_a);
            for _ in 0..3 {
                for k in 0..model.n_sites() {
                    gibbs_site_update(&model, &theta, &mut b, model.site_at(k), &mut rng_b);
                }
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn systematic_sweeps_hit_exact_state_frequencies() {
        let model = GrfModel::ising_default(2, 2).unwrap();
        let theta = [0.3];
        let lz = EnumeratedModel::new(&model).unwrap().log_z(&theta);
        let mut exact = std::collections::HashMap::new();
        for_each_state(&model, |y, s| {
            exact.insert(y.clone(), (theta[0] * s[0] - lz).exp());
        })
        .unwrap();
        let mut counts = std::collections::HashMap::new();
        let mut rng = seeded(2024);
        let mut y = model.random_state(&mut rng);
        let sweeps = 1_000_000;
        let kernel = SweepKernel::new(&model, &theta);
        for _ in 0..sweeps {
            kernel.sweep(&mut y, &mut rng);
            *counts.entry(y.clone()).or_insert(0usize) += 1;
        }
        for (state, p) in exact {
            let observed = *counts.get(&state).unwrap_or(&0) as f64 / sweeps as f64;
            // Successive sweeps of a 2x2 lattice are weakly correlated; allow for it with 4 SEs of a
            // variance inflated by 2.
            let se = (2.0 * p * (1.0 - p) / sweeps as f64).sqrt();
            assert!((observed - p).abs() < 4.0 * se, "{state:?}: {observed} vs {p}");
        }
    }

    #[test]
    fn auxiliary_mean_matches_exact_moment() {
        let model = GrfModel::ising_default(4, 4).unwrap();
        let theta = [0.3];
        let config = SamplerConfig {
            aux_burnin: 50,
            aux_thin: 1,
            ..SamplerConfig::default()
        };
        let mut rng = seeded(77);
        let draws = draw_auxiliary_stats(&model, &theta, &config, 10_000, &mut rng);
        let values: Vec<f64> = draws.iter().map(|s| s[0]).collect();
        let mean = crate::numeric::mean(&values);
        let (exact, cov) = exact_moments(&model, &theta).unwrap();
        // Thin-1 draws are autocorrelated; the batch-means SE accounts for it.
        let batches: Vec<f64> = values.chunks(500).map(crate::numeric::mean).collect();
        let se = (crate::numeric::variance(&batches) / batches.len() as f64).sqrt();
        assert!((mean - exact[0]).abs() < 4.0 * se.max((cov[(0, 0)] / 10_000.0).sqrt()));
    }

    #[test]
    fn auxiliary_draws_are_deterministic() {
        let model = GrfModel::ergm_default(6, StatSet::all()).unwrap();
        let config = SamplerConfig {
            aux_burnin: 20,
            ..SamplerConfig::default()
        };
        let theta = [-0.5, 0.1, 0.0, 0.2];
        let a = draw_auxiliary(&model, &theta, &config, 5, &mut seeded(3));
        let b = draw_auxiliary(&model, &theta, &config, 5, &mut seeded(3));
        assert_eq!(a, b);
        let stats = draw_auxiliary_stats(&model, &theta, &config, 5, &mut seeded(3));
        let from_states: Vec<SuffStats> = a.iter().map(|s| model.suff_stats(s).unwrap()).collect();
        assert_eq!(stats, from_states);
        assert_eq!(draw_auxiliary(&model, &theta, &config, 1, &mut seeded(3))[0], a[0]);
    }
}
