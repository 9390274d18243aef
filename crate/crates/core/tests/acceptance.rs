//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit if any failed.
//!
//! Run alone with `cargo test -p noisy-grf --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use noisy_grf::bounds::{empirical_kernel_tv, langevin_delta_bound, theorem3_constants, verify_random_pairs, EmpiricalTv};
use noisy_grf::diagnostics::{chi_squared_vs_grid, sign_test_p};
use noisy_grf::io::load_graph;
use noisy_grf::models::{ErgmStat, SpinLattice, StatSet};
use noisy_grf::oracle::{
    exact_moments, exact_posterior_grid, for_each_state, grid_summaries, ising_transfer_log_z, EnumeratedModel,
};
use noisy_grf::rng::{chain_rng, seeded, stream_seed};
use noisy_grf::samplers::{
    draw_auxiliary, exchange_log_alpha, grad_from_expected, log_ratio_estimate, mala_log_alpha,
    noisy_exchange_log_alpha, Algorithm, Budget, ChainState, Sampler, SamplerConfig, StepMatrix,
};
use noisy_grf::study::{ergm_study, ising_bias_study, ErgmStudyConfig, StudyConfig};
use noisy_grf::tuning::{estimate_log_posterior_hessian, robbins_monro_map, RmSchedule};
use noisy_grf::{GrfModel, GrfState, SuffStats};

const SEED: u64 = 20_140_519;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn simulate_ising(model: &GrfModel, theta: f64, stream: u64) -> GrfState {
    let config = SamplerConfig {
        aux_burnin: 2000,
        ..SamplerConfig::default()
    };
    draw_auxiliary(model, &[theta], &config, 1, &mut chain_rng(SEED, stream)).pop().unwrap()
}

fn c1_oracle_consistency() -> Outcome {
    let thetas = [-0.4, -0.1, 0.0, 0.3, 0.8];
    let mut worst = 0.0f64;
    let mut count = 0;
    for h in 1..=5usize {
        for w in 1..=5usize {
            if h * w > 20 || h.min(w) > 4 {
                continue;
            }
            let model = GrfModel::ising_default(h, w).unwrap();
            let e = EnumeratedModel::new(&model).unwrap();
            for &t in &thetas {
                let d = (ising_transfer_log_z(h, w, t).unwrap() - e.log_z(&[t])).abs();
                worst = worst.max(d);
                count += 1;
            }
        }
    }
    judge(worst <= 1e-9, format!("{count} (lattice, theta) cases, max |transfer - brute force| = {worst:.2e} (tol 1e-9)"))
}

fn c2_ratio_unbiasedness() -> Outcome {
    let model = GrfModel::ising_default(2, 2).unwrap();
    let mut states = Vec::new();
    for_each_state(&model, |_, s| states.push(s[0])).unwrap();
    let log_z = |t: f64| {
        let m = states.iter().map(|s| t * s).fold(f64::NEG_INFINITY, f64::max);
        m + states.iter().map(|s| (t * s - m).exp()).sum::<f64>().ln()
    };
    let mut rng = seeded(SEED ^ 2);
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let (t, tp) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let lz_p = log_z(tp);
        let expectation: f64 = states.iter().map(|s| (tp * s - lz_p).exp() * ((t - tp) * s).exp()).sum();
        let target = (log_z(t) - lz_p).exp();
        worst = worst.max((expectation / target - 1.0).abs());
    }
    judge(worst <= 1e-12, format!("25 pairs on 2x2, max relative error {worst:.2e} (tol 1e-12)"))
}

fn c3_reduction_identities() -> Outcome {
    let model = GrfModel::ergm_default(5, StatSet::new([ErgmStat::Edges, ErgmStat::TwoStars, ErgmStat::Triangles]).unwrap())
        .unwrap();
    let step = StepMatrix::new(DMatrix::from_row_slice(3, 3, &[0.05, 0.01, 0.0, 0.01, 0.03, 0.005, 0.0, 0.005, 0.02])).unwrap();
    let mut rng = seeded(SEED ^ 3);
    let mut r = |lo: f64, hi: f64, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let (mut worst_ex, mut worst_mala) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (s_y, s_aux) = (r(0.0, 10.0, 3), r(0.0, 10.0, 3));
        let (t, tp) = (r(-1.0, 1.0, 3), r(-1.0, 1.0, 3));
        let (g, gp) = (r(-5.0, 5.0, 3), r(-5.0, 5.0, 3));
        let aux = [SuffStats(s_aux.clone())];
        let a = exchange_log_alpha(&model, &s_y, &t, &tp, &s_aux).min(0.0).exp();
        let b = noisy_exchange_log_alpha(&model, &s_y, &t, &tp, &aux).min(0.0).exp();
        worst_ex = worst_ex.max((a - b).abs());
        let single: f64 = t.iter().zip(&tp).zip(&s_aux).map(|((x, y), s)| (x - y) * s).sum();
        let m1 = mala_log_alpha(&model, &s_y, &step, &t, &g, &tp, &gp, single).min(0.0).exp();
        let mn = mala_log_alpha(&model, &s_y, &step, &t, &g, &tp, &gp, log_ratio_estimate(&t, &tp, &aux))
            .min(0.0)
            .exp();
        worst_mala = worst_mala.max((m1 - mn).abs());
    }
    judge(
        worst_ex <= 1e-14 && worst_mala <= 1e-14,
        format!("100 tuples, max |diff| exchange {worst_ex:.1e}, MALA-exchange {worst_mala:.1e} (tol 1e-14)"),
    )
}

fn c4_exactness() -> Outcome {
    let model = GrfModel::ising_default(4, 4).unwrap();
    let y = simulate_ising(&model, 0.3, 4);
    let grid = exact_posterior_grid(&model, &y, &linspace(-2.0, 3.0, 5001)).unwrap();
    let (gmean, gsd) = grid_summaries(&grid);
    let kept = 100_000usize;
    let iterations = kept * 5 / 4;
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, alg) in [Algorithm::ExactMh, Algorithm::Exchange, Algorithm::MalaExchange].into_iter().enumerate() {
        let config = SamplerConfig {
            n_aux: 10,
            aux_burnin: 500,
            rw_scale: 2.4 * gsd,
            step_matrix: Some(vec![vec![gsd * gsd]]),
            seed: stream_seed(SEED, 40 + k as u64),
            budget: Budget::Iterations(iterations),
            initial_theta: Some(vec![gmean]),
            ..SamplerConfig::default()
        };
        let sampler = Sampler::new(&model, &y, config.clone()).unwrap().prepare(alg).unwrap();
        let trace = sampler.run(alg, &mut seeded(config.seed)).unwrap();
        let xs: Vec<f64> = trace.states[trace.len() - kept..].iter().map(|s| s[0]).collect();
        let r = chi_squared_vs_grid(&xs, &grid, 20).unwrap();
        ok &= r.p_value > 0.001;
        parts.push(format!("{alg} p = {:.3} (acc {:.2})", r.p_value, trace.acceptance_rate()));
    }
    judge(ok, format!("4x4, s(y) = {}, 1e5 draws each: {} (threshold 0.001)", model.suff_stats(&y).unwrap()[0], parts.join(", ")))
}

fn c5_mitrophanov() -> Outcome {
    let s = verify_random_pairs(8, 200, 0.05, 200, SEED).unwrap();
    judge(
        s.violations == 0 && s.pairs_tested == 200,
        format!("{} pairs, {} violations, worst slack {:.3e}", s.pairs_tested, s.violations, s.worst_slack),
    )
}

fn c6_noisy_exchange_scaling() -> Outcome {
    let mut rng = seeded(SEED ^ 6);
    let mut exact = 0;
    for _ in 0..100 {
        let (cp, ch, k) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
        let n = rng.random_range(1.0..1e6f64).round();
        let a = theorem3_constants(cp, ch, k, n).unwrap().total_bound;
        let b = theorem3_constants(cp, ch, k, 4.0 * n).unwrap().total_bound;
        exact += (b == a / 2.0) as usize;
    }

    // One-step laws from the posterior mean on 4x4, with common random numbers. Reference
    // kernel: exact M-H, the N -> infinity limit of noisy exchange.
    let model = GrfModel::ising_default(4, 4).unwrap();
    let y = simulate_ising(&model, 0.3, 6);
    let grid = exact_posterior_grid(&model, &y, &linspace(-2.0, 3.0, 2001)).unwrap();
    let (theta0, gsd) = grid_summaries(&grid);
    let base = SamplerConfig {
        aux_burnin: 300,
        rw_scale: 2.0 * gsd,
        ..SamplerConfig::default()
    };
    let step_fn = |alg: Algorithm, n_aux: usize| {
        let sampler = Sampler::new(&model, &y, SamplerConfig { n_aux, ..base.clone() }).unwrap().prepare(alg).unwrap();
        move |t: f64, rng: &mut noisy_grf::rng::ChainRng| {
            let mut state = ChainState::new(vec![t]);
            sampler.step(alg, &mut state, rng).unwrap();
            state.theta[0]
        }
    };
    let ns = [2usize, 8, 32, 128];
    let reps = 20_000;
    let vs_mh: Vec<EmpiricalTv> = ns
        .iter()
        .map(|&n| {
            empirical_kernel_tv(step_fn(Algorithm::ExactMh, 1), step_fn(Algorithm::NoisyExchange, n), theta0, reps, None, SEED).unwrap()
        })
        .collect();
    let vs_ex: Vec<EmpiricalTv> = ns
        .iter()
        .map(|&n| {
            empirical_kernel_tv(step_fn(Algorithm::Exchange, 1), step_fn(Algorithm::NoisyExchange, n), theta0, reps, None, SEED).unwrap()
        })
        .collect();
    let monotone = |v: &[EmpiricalTv]| {
        v.windows(2).all(|w| w[1].tv <= w[0].tv + 2.0 * (w[0].bootstrap_se.powi(2) + w[1].bootstrap_se.powi(2)).sqrt())
    };
    let fmt = |v: &[EmpiricalTv]| {
        v.iter().zip(&ns).map(|(t, n)| format!("N={n}: {:.4}±{:.4}", t.tv, t.bootstrap_se)).collect::<Vec<_>>().join(", ")
    };
    let ok = exact == 100 && monotone(&vs_mh);
    judge(
        ok,
        format!(
            "halving exact in {exact}/100 tuples; TV(exact M-H, noisy_N) {} [decreasing within 2 SE: {}]; \
             for reference TV(exchange, noisy_N) {} (grows with N since noisy_1 = exchange and noisy_inf = M-H)",
            fmt(&vs_mh),
            monotone(&vs_mh),
            fmt(&vs_ex)
        ),
    )
}

fn log_post(model: &GrfModel, e: &EnumeratedModel, s_y: &[f64], t: &[f64]) -> f64 {
    s_y.iter().zip(t).map(|(s, x)| s * x).sum::<f64>() - e.log_z(t) + model.prior().log_density(t)
}

fn c7_gradient_hessian() -> Outcome {
    let ising = GrfModel::ising_default(3, 3).unwrap();
    let y_ising = GrfState::Lattice(SpinLattice::new(3, 3, vec![1, 1, -1, 1, 1, 1, -1, 1, 1]).unwrap());
    let ergm = GrfModel::ergm_default(5, StatSet::new([ErgmStat::Edges, ErgmStat::TwoStars, ErgmStat::Triangles]).unwrap())
        .unwrap();
    let g = noisy_grf::models::UndirectedGraph::from_edges(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]).unwrap();
    let y_ergm = GrfState::Graph(g);
    let cases: [(&GrfModel, &GrfState, Vec<f64>); 2] =
        [(&ising, &y_ising, vec![0.2]), (&ergm, &y_ergm, vec![-0.3, 0.1, 0.2])];
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for (k, (model, y, theta)) in cases.iter().enumerate() {
        let e = EnumeratedModel::new(model).unwrap();
        let s_y = model.suff_stats(y).unwrap();
        let (mean, _) = exact_moments(model, theta).unwrap();
        let grad = grad_from_expected(model, &s_y, theta, &mean);
        let m = theta.len();
        let h = 1e-5;
        let lp = |t: &[f64]| log_post(model, &e, &s_y, t);
        for i in 0..m {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            worst_grad = worst_grad.max(((lp(&a) - lp(&b)) / (2.0 * h) - grad[i]).abs());
        }
        let hh = 1e-3;
        let fd = DMatrix::from_fn(m, m, |i, j| {
            let at = |di: f64, dj: f64| {
                let mut t = theta.clone();
                t[i] += di;
                t[j] += dj;
                lp(&t)
            };
            (at(hh, hh) - at(hh, -hh) - at(-hh, hh) + at(-hh, -hh)) / (4.0 * hh * hh)
        });
        let config = SamplerConfig {
            aux_burnin: 200,
            aux_thin: 4,
            ..SamplerConfig::default()
        };
        let est = estimate_log_posterior_hessian(model, y, theta, 40_000, &config, &mut chain_rng(SEED, 70 + k as u64)).unwrap();
        worst_hess = worst_hess.max((&est - &fd).norm() / fd.norm());
    }
    judge(
        worst_grad <= 1e-6 && worst_hess <= 0.05,
        format!(
            "3x3 Ising and 5-node ERGM: max gradient error {worst_grad:.1e} (tol 1e-6), \
             max relative Hessian error {:.2}% (Frobenius, tol 5%)",
            100.0 * worst_hess
        ),
    )
}

fn c8_robbins_monro() -> Outcome {
    let model = GrfModel::ising_default(4, 4).unwrap();
    let schedule = RmSchedule::default();
    let mut errs = Vec::new();
    for d in 0..5u64 {
        let y = simulate_ising(&model, 0.3, 80 + d);
        let grid = exact_posterior_grid(&model, &y, &linspace(-2.0, 3.0, 10_001)).unwrap();
        let config = SamplerConfig {
            n_aux: 100,
            aux_burnin: 300,
            ..SamplerConfig::default()
        };
        let out = robbins_monro_map(&model, &y, &schedule, &config, &mut chain_rng(SEED, 90 + d)).unwrap();
        errs.push((out.theta[0] - grid.argmax()).abs());
    }
    let worst = errs.iter().copied().fold(0.0, f64::max);
    judge(
        worst <= 0.02,
        format!("five 4x4 datasets, |MAP - grid argmax| = {} (tol 0.02)", errs.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(", ")),
    )
}

fn c9_langevin_asymptotics() -> Outcome {
    let n = 1e8;
    let ratio = |k: f64, s: f64, sig: f64| {
        let d = langevin_delta_bound(k, s, sig, n).unwrap().delta;
        d * 4.0 * s * s * sig * sig * n / (k * (n / k).ln())
    };
    let judged = [(1.0, 1.0, 0.1), (2.0, 3.0, 0.05)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, s, sig) in judged {
        let r = ratio(k, s, sig);
        ok &= (r - 1.0).abs() <= 0.05;
        parts.push(format!("(k={k}, S={s}, |Sigma|={sig}): {r:.5}"));
    }
    // Not judged: with large S |Sigma| the O(1/N) term still dominates log N / N at 1e8.
    let slow = ratio(1.0, 5.0, 0.5);
    judge(
        ok,
        format!("ratio at N = 1e8: {} (tol 5%); for information (k=1, S=5, |Sigma|=0.5): {slow:.2}", parts.join(", ")),
    )
}

fn c10_bias_direction() -> Outcome {
    let config = StudyConfig {
        algorithms: vec![Algorithm::Exchange, Algorithm::NoisyExchange],
        budget: Budget::Iterations(10_000),
        seed: SEED,
        ..StudyConfig::default()
    };
    let report = ising_bias_study(&config).unwrap();
    let table = report.bias_table();
    let ex = table.iter().find(|b| b.algorithm == Algorithm::Exchange).unwrap();
    let noisy = table.iter().find(|b| b.algorithm == Algorithm::NoisyExchange).unwrap();
    let exchange_biases: Vec<f64> = report.runs_for(Algorithm::Exchange).map(|r| r.summary.bias.as_ref().unwrap()[0]).collect();
    judge(
        noisy.mean_abs_bias <= ex.mean_abs_bias + 2.0 * ex.se_abs_bias,
        format!(
            "20 8x8 datasets, 1e4 iterations: mean |bias| noisy-exchange(N=100) {:.5} vs exchange {:.5} + 2 x {:.5}; \
             exchange sign-test p = {:.3}",
            noisy.mean_abs_bias,
            ex.mean_abs_bias,
            ex.se_abs_bias,
            sign_test_p(&exchange_biases)
        ),
    )
}

fn c11_florentine() -> Outcome {
    let Ok(path) = std::env::var("NOISY_GRF_FLORENTINE") else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: "set NOISY_GRF_FLORENTINE to a 16-node business edge list to run".into(),
        };
    };
    let g = match load_graph(std::path::Path::new(&path)) {
        Ok(g) => g,
        Err(e) => return judge(false, format!("could not load {path}: {e}")),
    };
    let config = ErgmStudyConfig {
        algorithms: vec![Algorithm::NoisyExchange],
        budget: Budget::Iterations(30_000),
        rw_scale: 0.1,
        seed: SEED,
        ..ErgmStudyConfig::default()
    };
    let report = ergm_study(&config, &g).unwrap();
    let m = &report.runs[0].summary.mean;
    let reference = [(-2.675, 0.647), (0.188, 0.155)];
    let ok = m.iter().zip(reference).all(|(x, (r, sd))| (x - r).abs() <= 3.0 * sd);
    judge(ok, format!("posterior means (edges, two-stars) = ({:.3}, {:.3}) vs (-2.675 +/- 3 x 0.647, 0.188 +/- 3 x 0.155)", m[0], m[1]))
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, f64, Check); 11] = [
        ("1 oracle consistency", 1.0, c1_oracle_consistency),
        ("2 ratio estimator unbiasedness", 1.0, c2_ratio_unbiasedness),
        ("3 single-draw reduction identities", 1.0, c3_reduction_identities),
        ("4 exactness of exchange-family samplers", 120.0, c4_exactness),
        ("5 Mitrophanov bound on random kernels", 30.0, c5_mitrophanov),
        ("6 noisy exchange 1/sqrt(N) scaling", 300.0, c6_noisy_exchange_scaling),
        ("7 gradient and Hessian identities", 60.0, c7_gradient_hessian),
        ("8 Robbins-Monro MAP", 120.0, c8_robbins_monro),
        ("9 noisy Langevin delta asymptotics", 1.0, c9_langevin_asymptotics),
        ("10 bias direction, exchange vs noisy exchange", 900.0, c10_bias_direction),
        ("11 Florentine business posterior means", 900.0, c11_florentine),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= limit;
        let tag = match (&outcome.verdict, in_time) {
            (Verdict::Skip, _) => "SKIP",
            (Verdict::Pass, true) => "PASS",
            _ => {
                failed += 1;
                "FAIL"
            }
        };
        println!("[{tag}] {name}: {} ({secs:.2} s, limit {limit} s)", outcome.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed or were skipped");
        ExitCode::SUCCESS
    }
}
