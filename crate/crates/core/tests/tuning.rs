use noisy_grf::models::{ErgmStat, SpinLattice, StatSet, UndirectedGraph};
use noisy_grf::oracle::exact_moments;
use noisy_grf::rng::chain_rng;
use noisy_grf::tuning::{estimate_log_posterior_hessian, robbins_monro_map, tune, tune_step_matrix, RmSchedule, TuneConfig};
use noisy_grf::samplers::SamplerConfig;
use noisy_grf::{GrfError, GrfModel, GrfState};

fn edges_only() -> (GrfModel, GrfState) {
    let model = GrfModel::ergm_default(5, StatSet::new(vec![ErgmStat::Edges]).unwrap()).unwrap();
    let g = UndirectedGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    (model, GrfState::Graph(g))
}

/// Posterior mode of the edges-only model: 4 - 10 p(theta) - theta / 100 = 0, by bisection.
fn exact_mode() -> f64 {
    let g = |t: f64| 4.0 - 10.0 / (1.0 + f64::exp(-t)) - t / 100.0;
    let (mut lo, mut hi) = (-3.0, 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sampler() -> SamplerConfig {
    SamplerConfig {
        n_aux: 20,
        aux_burnin: 50,
        aux_thin: 2,
        ..SamplerConfig::default()
    }
}

#[test]
fn robbins_monro_finds_the_mode() {
    let (model, y) = edges_only();
    let schedule = RmSchedule {
        a: 0.5,
        ..RmSchedule::default()
    };
    let out = robbins_monro_map(&model, &y, &schedule, &sampler(), &mut chain_rng(4, 0)).unwrap();
    assert!(out.converged);
    assert!((out.theta[0] - exact_mode()).abs() < 0.05, "{} vs {}", out.theta[0], exact_mode());
}

#[test]
fn hessian_matches_the_exact_curvature() {
    let stats = StatSet::new(vec![ErgmStat::Edges, ErgmStat::TwoStars]).unwrap();
    let model = GrfModel::ergm_default(5, stats).unwrap();
    let y = GrfState::Graph(UndirectedGraph::from_edges(5, &[(0, 1), (1, 2), (0, 3)]).unwrap());
    let theta = [-0.5, 0.05];
    let (_, cov) = exact_moments(&model, &theta).unwrap();
    let exact = -cov - nalgebra::DMatrix::identity(2, 2) / 100.0;
    let est = estimate_log_posterior_hessian(&model, &y, &theta, 4000, &sampler(), &mut chain_rng(8, 1)).unwrap();
    let rel = (&est - &exact).norm() / exact.norm();
    assert!(rel < 0.1, "relative error {rel}\n{est}\n{exact}");
}

#[test]
fn step_matrix_is_the_scaled_inverse_curvature() {
    let h = nalgebra::DMatrix::from_row_slice(2, 2, &[-4.0, 1.0, 1.0, -2.0]);
    let sigma = tune_step_matrix(&h, 0.5).unwrap();
    let product = &sigma * (-&h);
    assert!((product - nalgebra::DMatrix::identity(2, 2) * 0.5).norm() < 1e-12);
    let indefinite = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(tune_step_matrix(&indefinite, 1.0), Err(GrfError::NotNegativeDefinite(_))));
}

#[test]
fn full_pipeline_is_deterministic_and_targets_the_acceptance_rate() {
    let model = GrfModel::ising_default(3, 3).unwrap();
    let y = GrfState::Lattice(SpinLattice::new(3, 3, vec![1, 1, -1, 1, 1, 1, -1, 1, 1]).unwrap());
    let config = TuneConfig {
        schedule: RmSchedule {
            a: 0.2,
            max_iter: 5000,
            ..RmSchedule::default()
        },
        hessian_draws: 500,
        sampler: sampler(),
        ..TuneConfig::default()
    };
    let a = tune(&model, &y, &config, 11).unwrap();
    let b = tune(&model, &y, &config, 11).unwrap();
    assert_eq!(a, b);
    assert!(a.hessian[0][0] < 0.0);
    assert!((a.sigma[0][0] * -a.hessian[0][0] - a.scale).abs() < 1e-12);
    let acc = a.acceptance.unwrap();
    assert!((0.1..0.5).contains(&acc), "pilot acceptance {acc}");
}
