use noisy_grf::diagnostics::{effective_sample_size, summarize, DEFAULT_MAX_LAG};
use noisy_grf::models::{ErgmStat, StatSet, UndirectedGraph};
use noisy_grf::oracle::{exact_posterior_grid, grid_summaries};
use noisy_grf::samplers::{run_chain, Algorithm, Budget, SamplerConfig};
use noisy_grf::{GrfModel, GrfState};

fn edges_only() -> (GrfModel, GrfState) {
    let model = GrfModel::ergm_default(5, StatSet::new(vec![ErgmStat::Edges]).unwrap()).unwrap();
    let g = UndirectedGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    (model, GrfState::Graph(g))
}

fn grid() -> Vec<f64> {
    (0..1201).map(|i| -4.0 + 0.005 * i as f64).collect()
}

fn config(n_aux: usize, seed: u64, post_var: f64) -> SamplerConfig {
    SamplerConfig {
        n_aux,
        aux_burnin: 50,
        aux_thin: 2,
        rw_scale: 2.4 * post_var.sqrt(),
        seed,
        budget: Budget::Iterations(20_000),
        ..SamplerConfig::default()
    }
    .with_step_matrix(&nalgebra::DMatrix::from_element(1, 1, post_var))
}

#[test]
fn asymptotically_exact_samplers_recover_the_grid_mean() {
    let (model, y) = edges_only();
    let post = exact_posterior_grid(&model, &y, &grid()).unwrap();
    let (mean, sd) = grid_summaries(&post);
    for (k, algorithm) in [Algorithm::ExactMh, Algorithm::Exchange, Algorithm::MalaExchange].into_iter().enumerate() {
        let n_aux = if algorithm == Algorithm::MalaExchange { 20 } else { 1 };
        let trace = run_chain(algorithm, &model, &y, &config(n_aux, 40 + k as u64, sd * sd)).unwrap();
        let s = summarize(&trace, 0.2, DEFAULT_MAX_LAG, Some(&post)).unwrap();
        let z = (s.mean[0] - mean) / s.mc_se[0];
        assert!(z.abs() < 4.0, "{algorithm}: mean {} vs {mean}, z = {z:.2}", s.mean[0]);
        assert!((s.sd[0] / sd - 1.0).abs() < 0.15, "{algorithm}: sd {} vs {sd}", s.sd[0]);
    }
}

#[test]
fn noisy_samplers_stay_close_to_the_posterior() {
    let (model, y) = edges_only();
    let post = exact_posterior_grid(&model, &y, &grid()).unwrap();
    let (mean, sd) = grid_summaries(&post);
    for (k, algorithm) in [Algorithm::NoisyExchange, Algorithm::NoisyLangevin, Algorithm::NoisyMalaExchange]
        .into_iter()
        .enumerate()
    {
        let trace = run_chain(algorithm, &model, &y, &config(20, 70 + k as u64, sd * sd)).unwrap();
        let s = summarize(&trace, 0.2, DEFAULT_MAX_LAG, Some(&post)).unwrap();
        // Bias of order sd / 5 at most for N = 20 on this model.
        assert!((s.mean[0] - mean).abs() < 0.2 * sd + 4.0 * s.mc_se[0], "{algorithm}: {} vs {mean}", s.mean[0]);
    }
}

#[test]
fn chains_replay_from_the_seed_and_differ_across_seeds() {
    let (model, y) = edges_only();
    let mut c = config(5, 1, 0.5);
    c.budget = Budget::Iterations(300);
    for algorithm in Algorithm::ALL {
        let a = run_chain(algorithm, &model, &y, &c).unwrap();
        let b = run_chain(algorithm, &model, &y, &c).unwrap();
        assert!(a.same_chain(&b), "{algorithm}");
        let other = run_chain(algorithm, &model, &y, &SamplerConfig { seed: 2, ..c.clone() }).unwrap();
        assert!(!a.same_chain(&other), "{algorithm}");
        assert_eq!(a.len(), 301);
        assert!(a.acceptance_rate() > 0.05, "{algorithm}: {}", a.acceptance_rate());
    }
}

#[test]
fn exchange_acceptance_and_mixing_are_reasonable() {
    let (model, y) = edges_only();
    let post = exact_posterior_grid(&model, &y, &grid()).unwrap();
    let (_, sd) = grid_summaries(&post);
    let trace = run_chain(Algorithm::Exchange, &model, &y, &config(1, 9, sd * sd)).unwrap();
    let rate = trace.acceptance_rate();
    assert!((0.1..0.6).contains(&rate), "{rate}");
    let ess = effective_sample_size(&trace.column(0)[4000..]);
    assert!(!ess.degenerate && ess.ess > 1000.0, "{ess:?}");
}

#[test]
fn wall_clock_budget_stops_the_chain() {
    let (model, y) = edges_only();
    let c = SamplerConfig {
        budget: Budget::Seconds(0.05),
        ..config(1, 3, 0.5)
    };
    let trace = run_chain(Algorithm::Exchange, &model, &y, &c).unwrap();
    assert!(trace.iterations() > 0);
    assert!(trace.total_seconds() < 1.0);
}
