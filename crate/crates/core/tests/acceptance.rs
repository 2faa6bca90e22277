//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line with
//! its measured values and elapsed time against its budget.
//!
//! Run all of them with `cargo test --release --test acceptance`, or pass
//! criterion ids after `--` to run a subset.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sinkhorn_dro::double_loop::{
    hypergradient_estimate, pilot_variance, run_double_loop, stationarity_norm, theorem35_eta, theorem35_params,
    DoubleLoopConfig,
};
use sinkhorn_dro::experiment::attack::evaluate_robust_accuracy;
use sinkhorn_dro::experiment::baselines::wdro_inner_maximize;
use sinkhorn_dro::experiment::commands::{dataset, train_model};
use sinkhorn_dro::experiment::config::ExperimentConfig;
use sinkhorn_dro::langevin::{
    lsi_constant_bounded_loss, lsi_constant_lipschitz_loss, run_chain, theorem_iteration_count, theorem_step_size,
    LsiEstimate, SamplerConfig, SamplingPlan,
};
use sinkhorn_dro::losses::{ClassifierLoss, LinearLoss, LogisticLoss, QuadraticLoss};
use sinkhorn_dro::model::LossModel;
use sinkhorn_dro::oracles::{
    dual_objective_quadrature, empirical_w2_1d, gaussian_quantiles_1d, gaussian_worstcase_linear,
    gaussian_worstcase_quadratic, lemma34_variance_bound, total_variance, true_hypergradient_quadrature,
    QuadratureGrid,
};
use sinkhorn_dro::rng::{Domain, Tag};
use sinkhorn_dro::single_loop::{run_single_loop, theorem45_params, SingleLoopConfig, Theorem45Constants};
use sinkhorn_dro::{AnchorSet, HyperParams, RandomStream};

fn benchmark() -> (AnchorSet, HyperParams) {
    (
        AnchorSet::new(vec![vec![-0.25], vec![0.25], vec![0.75], vec![1.25]], None).unwrap(),
        HyperParams::new(2.0, 0.1).unwrap(),
    )
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn sampler_correctness() -> Outcome {
    const CHAINS: usize = 10_000;
    const DELTA: f64 = 0.05;
    const W2_TOL: f64 = DELTA + 0.01;
    let anchors = AnchorSet::new(vec![vec![1.0]], None).unwrap();
    let hp = HyperParams::new(2.0, 0.1).unwrap();
    let theta = [0.6];
    let model = LinearLoss::new(1);
    let plan = SamplingPlan::theorem(LsiEstimate::user(1.0 / hp.epsilon()).unwrap(), 1.0);
    let schedule = plan.schedule(&hp, DELTA, 1).unwrap();
    let chain = SamplerConfig::from_schedule(schedule, 0);
    let stream = RandomStream::new(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let samples: Vec<f64> = pool.install(|| {
        (0..CHAINS)
            .map(|r| run_chain(&chain, &theta, &anchors, &hp, &model, &stream.substream(r as u64)).unwrap()[0])
            .collect()
    });
    let target = gaussian_worstcase_linear(&theta, &[1.0], &hp).unwrap();
    let w2 = empirical_w2_1d(&samples, &gaussian_quantiles_1d(&target, CHAINS).unwrap()).unwrap();
    Outcome {
        pass: w2 <= W2_TOL,
        detail: format!(
            "tau = {:.4e}, steps = {}, W2 to N({}, {}) = {w2:.4} (tol {W2_TOL:.2})",
            schedule.tau, schedule.steps, target.mean[0], target.variance_scale
        ),
    }
}

/// Stratified Monte-Carlo mean of the one-sample hypergradient.
fn mc_hypergradient<M: LossModel + Sync + ?Sized>(
    model: &M,
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    chain: (f64, usize),
    samples: usize,
    stream: &RandomStream,
) -> Vec<f64> {
    let n = anchors.len();
    let grads: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|job| {
            let (i, r) = (job % n, job / n);
            let cfg = SamplerConfig::new(chain.0, chain.1, i).unwrap();
            let z = run_chain(&cfg, theta, anchors, hp, model, &stream.substream(r as u64)).unwrap();
            hypergradient_estimate(model, theta, &z, i)
        })
        .collect();
    let mut mean = vec![0.0; theta.len()];
    for g in &grads {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / samples as f64;
        }
    }
    mean
}

fn hypergradient_consistency() -> Outcome {
    const FD_STEP: f64 = 1e-5;
    const FD_REL_TOL: f64 = 1e-6;
    const MC_ABS_TOL: f64 = 0.03;
    const MC_SAMPLES: usize = 10_000;
    const DELTA: f64 = 0.01;
    const MC_TAU: f64 = 1e-3;
    let hp = HyperParams::new(2.0, 0.1).unwrap();
    let labels = vec![1.0, -1.0, 1.0, -1.0];
    let sets = [
        AnchorSet::new(
            vec![vec![-0.25], vec![0.25], vec![0.75], vec![1.25]],
            Some(labels.clone()),
        )
        .unwrap(),
        AnchorSet::new(
            vec![vec![1.0, 0.4], vec![-0.8, 0.1], vec![0.3, -1.2], vec![-0.2, 0.9]],
            Some(labels),
        )
        .unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_fd = 0.0f64;
    let mut worst_mc = 0.0f64;
    let mut cases = 0;
    for anchors in &sets {
        let d = anchors.dim();
        let grid = QuadratureGrid::gauss_hermite(if d == 1 { 96 } else { 64 }, d).unwrap();
        let linear = LinearLoss::new(d);
        let logistic = LogisticLoss::logistic(anchors).unwrap();
        let models: [(&dyn LossModel, bool); 2] = [(&linear, false), (&logistic, true)];
        for (model, is_logistic) in models {
            for _ in 0..5 {
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let exact = true_hypergradient_quadrature(&theta, anchors, &hp, model, &grid).unwrap();
                let fd: Vec<f64> = (0..d)
                    .map(|j| {
                        let mut up = theta.clone();
                        let mut dn = theta.clone();
                        up[j] += FD_STEP;
                        dn[j] -= FD_STEP;
                        (dual_objective_quadrature(&up, anchors, &hp, model, &grid).unwrap()
                            - dual_objective_quadrature(&dn, anchors, &hp, model, &grid).unwrap())
                            / (2.0 * FD_STEP)
                    })
                    .collect();
                worst_fd = worst_fd.max(l2_diff(&exact, &fd) / l2(&fd));

                // The worst case is strongly log-concave with this constant for both losses.
                let curvature = if is_logistic { l2(&theta).powi(2) / 4.0 } else { 0.0 };
                let alpha = (1.0 - curvature / hp.lambda()) / hp.epsilon();
                let steps = theorem_iteration_count(alpha, MC_TAU, hp.epsilon(), d as f64, DELTA).unwrap();
                let stream = RandomStream::new(100 + cases);
                let mc = mc_hypergradient(model, &theta, anchors, &hp, (MC_TAU, steps), MC_SAMPLES, &stream);
                worst_mc = worst_mc.max(l2_diff(&mc, &exact));
                cases += 1;
            }
        }
    }
    Outcome {
        pass: worst_fd <= FD_REL_TOL && worst_mc <= MC_ABS_TOL,
        detail: format!(
            "{cases} cases; worst relative error vs finite differences = {worst_fd:.2e} (tol {FD_REL_TOL:e}), \
             worst Monte-Carlo error = {worst_mc:.4} (tol {MC_ABS_TOL})"
        ),
    }
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn double_loop_convergence() -> Outcome {
    const VARRHO: f64 = 0.1;
    const STATIONARITY_TOL: f64 = 0.1 + 0.05;
    const THETA_TOL: f64 = 0.15;
    const PILOT_SAMPLES: usize = 256;
    const REPLICAS: usize = 1000;
    let (anchors, hp) = benchmark();
    let model = LinearLoss::new(1);
    let lsi = LsiEstimate::user(1.0 / hp.epsilon()).unwrap();
    let plan = SamplingPlan::theorem(lsi, 1.0);
    let delta = VARRHO / 2.0;
    let schedule = plan.schedule(&hp, delta, 1).unwrap();
    let pilot = pilot_variance(
        &[0.0],
        &anchors,
        &hp,
        &model,
        &lsi,
        schedule,
        delta,
        PILOT_SAMPLES,
        &RandomStream::new(99),
    )
    .unwrap();
    // F(theta) = theta * xbar + theta^2 / (2 lambda); F(0) - F(-1) = 0.25.
    let params = theorem35_params(VARRHO, pilot.v, 1.0, 0.25).unwrap();
    let results: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = DoubleLoopConfig::from_theorem(params, VARRHO, seed);
            let out = run_double_loop(&cfg, &anchors, &hp, &model, &lsi).unwrap();
            let st = stationarity_norm(
                &out.theta_hat,
                &anchors,
                &hp,
                &model,
                REPLICAS,
                delta,
                &plan,
                &RandomStream::new(seed + 1000),
            )
            .unwrap();
            (out.theta_hat[0], st.norm)
        })
        .collect();
    let pass = results
        .iter()
        .all(|&(t, s)| (t + 1.0).abs() <= THETA_TOL && s <= STATIONARITY_TOL);
    Outcome {
        pass,
        detail: format!(
            "V = {:.3}, T_out = {}, eta = {:.3e}, inner steps = {}; (theta_hat, |grad F|) per seed = {}",
            pilot.v,
            params.t_out,
            params.eta,
            schedule.steps,
            pairs(&results)
        ),
    }
}

fn pairs(v: &[(f64, f64)]) -> String {
    let items: Vec<String> = v.iter().map(|(a, b)| format!("({a:.4}, {b:.4})")).collect();
    items.join(" ")
}

fn single_loop_convergence() -> Outcome {
    const VARRHO: f64 = 0.1;
    const THETA_TOL: f64 = 0.2;
    const MEAN_TOL: f64 = 0.1;
    const TAU_FACTOR: f64 = 8.0;
    const ETA_FACTOR: f64 = 1000.0;
    const ITERATIONS: usize = 50_000;
    let (anchors, hp) = benchmark();
    let model = LinearLoss::new(1);
    let constants = Theorem45Constants {
        lambda: hp.lambda(),
        epsilon: hp.epsilon(),
        alpha: 1.0 / hp.epsilon(),
        l_f1: 1.0,
        l_f2: 1.0,
        d: 1,
        n: anchors.len(),
        batch: 2,
        f_gap: 0.25,
        // grad F(0) = xbar and r_0 = 0.
        grad_gap: 0.25,
        // The initial bank N(x, eps) is the worst case at theta_0 = 0.
        kl0_sum: 0.0,
    };
    let bound = theorem45_params(VARRHO, &constants).unwrap();
    let params = bound.scaled(TAU_FACTOR, ETA_FACTOR);
    let runs: Vec<(f64, Vec<f64>)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = SingleLoopConfig::from_theorem(&params, 2, ITERATIONS, seed).with_particles(64);
            let out = run_single_loop(&cfg, &anchors, &hp, &model).unwrap();
            let theta = out.theta_last[0];
            let residuals = (0..anchors.len())
                .map(|i| out.bank.row_mean(i)[0] - (anchors.point(i)[0] + theta / hp.lambda()))
                .collect();
            (theta, residuals)
        })
        .collect();
    let pooled: Vec<f64> = (0..anchors.len())
        .map(|i| runs.iter().map(|(_, r)| r[i]).sum::<f64>() / runs.len() as f64)
        .collect();
    let thetas: Vec<f64> = runs.iter().map(|(t, _)| *t).collect();
    let pass = thetas.iter().all(|t| (t + 1.0).abs() <= THETA_TOL) && pooled.iter().all(|r| r.abs() <= MEAN_TOL);
    Outcome {
        pass,
        detail: format!(
            "tau = {:.3e}, eta = {:.3e}, beta0 = {:.3e}, T = {ITERATIONS} (bound T_min = {}); theta_T per seed = {:.4?}; \
             pooled bank-mean residuals per anchor = {:.4?} (tol {MEAN_TOL})",
            params.tau, params.eta, params.beta0, bound.t_min, thetas, pooled
        ),
    }
}

fn estimator_diagnostics() -> Outcome {
    const SAMPLES: usize = 10_000;
    const THETA: f64 = 0.6;
    let (anchors, hp) = benchmark();
    let model = LinearLoss::new(1);
    let alpha = 1.0 / hp.epsilon();
    let plan = SamplingPlan::theorem(LsiEstimate::user(alpha).unwrap(), 1.0);
    let n = anchors.len();
    let exact = 0.5 + THETA / hp.lambda();

    // sigma^2 and the L_f1 proxy from exact draws of the worst-case distributions.
    let oracle = RandomStream::new(5);
    let draws: Vec<Vec<f64>> = (0..SAMPLES as u64)
        .map(|s| {
            let i = oracle.uniform_index(Tag::new(Domain::Test, 0, s, 0), n);
            let g = gaussian_worstcase_linear(&[THETA], anchors.point(i), &hp).unwrap();
            g.sample(&oracle, Tag::new(Domain::Test, 1, s, 0))
        })
        .collect();
    let sigma2 = total_variance(&draws).unwrap();
    let center = draws.iter().map(|g| g[0]).sum::<f64>() / SAMPLES as f64;
    let l_f1 = draws.iter().map(|g| (g[0] - center).abs()).fold(0.0, f64::max) / 2.0;

    let mut pass = true;
    let mut rows = Vec::new();
    for delta in [0.2, 0.1, 0.05] {
        let schedule = plan.schedule(&hp, delta, 1).unwrap();
        let stream = RandomStream::new(6);
        let grads: Vec<Vec<f64>> = (0..SAMPLES as u64)
            .into_par_iter()
            .map(|s| {
                let i = stream.uniform_index(Tag::new(Domain::Pilot, 0, s, 0), n);
                let z = run_chain(
                    &SamplerConfig::from_schedule(schedule, i),
                    &[THETA],
                    &anchors,
                    &hp,
                    &model,
                    &stream.substream(s),
                )
                .unwrap();
                hypergradient_estimate(&model, &[THETA], &z, i)
            })
            .collect();
        let mean = grads.iter().map(|g| g[0]).sum::<f64>() / SAMPLES as f64;
        let variance = total_variance(&grads).unwrap();
        let se = (variance / SAMPLES as f64).sqrt();
        let bias = (mean - exact).abs();
        let bias_tol = delta + 3.0 * se;
        let v_bound = lemma34_variance_bound(sigma2, l_f1, 1.0, alpha, delta).unwrap();
        pass &= bias <= bias_tol && variance <= v_bound;
        rows.push(format!(
            "delta {delta}: bias {bias:.4} <= {bias_tol:.4}, variance {variance:.4} <= {v_bound:.4}"
        ));
    }
    Outcome {
        pass,
        detail: format!("sigma2 = {sigma2:.4}, L_f1 proxy = {l_f1:.3}; {}", rows.join("; ")),
    }
}

fn wdro_limit() -> Outcome {
    const ORACLE_TOL: f64 = 1e-4;
    const CHAINS: usize = 10_000;
    let c = 0.5;
    let x = 0.75;
    let lambda = 2.0;
    let anchors = AnchorSet::new(vec![vec![x]], None).unwrap();
    let oracle_mean = gaussian_worstcase_quadratic(c, &[x], &HyperParams::new(lambda, 0.1).unwrap())
        .unwrap()
        .mean[0];
    let quad = QuadraticLoss::new(c, 1, &HyperParams::new(lambda, 0.1).unwrap()).unwrap();
    let ascent = wdro_inner_maximize(&[0.0], &[x], 0, lambda, &quad, 2000, 0.2).unwrap()[0];
    let gap = (oracle_mean - ascent).abs();
    let distances: Vec<f64> = [0.1, 0.01]
        .iter()
        .map(|&eps| {
            let hp = HyperParams::new(lambda, eps).unwrap();
            let model = QuadraticLoss::new(c, 1, &hp).unwrap();
            let alpha = (lambda - c) / (lambda * eps);
            let plan = SamplingPlan::theorem(LsiEstimate::user(alpha).unwrap(), c);
            let schedule = plan.schedule(&hp, 2.0 * eps, 1).unwrap();
            let chain = SamplerConfig::from_schedule(schedule, 0);
            let stream = RandomStream::new(7);
            let zs: Vec<f64> = (0..CHAINS)
                .into_par_iter()
                .map(|r| run_chain(&chain, &[0.0], &anchors, &hp, &model, &stream.substream(r as u64)).unwrap()[0])
                .collect();
            (zs.iter().sum::<f64>() / CHAINS as f64 - ascent).abs()
        })
        .collect();
    Outcome {
        pass: gap <= ORACLE_TOL && distances[1] <= distances[0],
        detail: format!(
            "oracle mean {oracle_mean:.6}, inner maximizer {ascent:.6} (gap {gap:.1e}, tol {ORACLE_TOL:e}); \
             |sampled mean - maximizer| at eps 0.1 = {:.4}, at eps 0.01 = {:.4}",
            distances[0], distances[1]
        ),
    }
}

fn parameter_formulas() -> Outcome {
    const TRANSCENDENTAL_TOL: f64 = 1e-12;
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let hp = |l: f64, e: f64| HyperParams::new(l, e).unwrap();

    check(
        "step size, unclipped branch",
        theorem_step_size(1.0, &hp(1.0, 1.0), 1.0, 3.0, 1).unwrap() == 1.0 / 16.0,
    );
    check(
        "step size, clipped branch",
        theorem_step_size(2.0, &hp(1.0, 0.5), 0.0, 1.0, 1).unwrap() == 0.0625,
    );
    let small = theorem_step_size(1.0, &hp(1.0, 1.0), 1.0, 0.5, 1).unwrap();
    let half = theorem_step_size(1.0, &hp(1.0, 1.0), 1.0, 0.25, 1).unwrap();
    check("step size is quadratic in delta", half * 4.0 == small);
    check(
        "iteration count ceil(ln 4)",
        theorem_iteration_count(1.0, 1.0, 1.0, 1.0, 1.0).unwrap() == 2,
    );
    check(
        "iteration count at the log boundary",
        theorem_iteration_count(1.0, 1.0, 1.0, 0.25, 1.0).unwrap() == 1,
    );
    check(
        "benchmark step size",
        (theorem_step_size(10.0, &hp(2.0, 0.1), 1.0, 0.05, 1).unwrap() - 0.0025 / 7.2).abs() <= TRANSCENDENTAL_TOL,
    );
    check(
        "benchmark iteration count",
        theorem_iteration_count(10.0, 0.0025 / 7.2, 0.1, 1.0, 0.05).unwrap() == 14617,
    );

    check(
        "bounded-loss LSI at B = 0",
        lsi_constant_bounded_loss(0.0, &hp(2.0, 0.1)).unwrap().alpha == 10.0,
    );
    let b = 2.0 * 0.1 / 4.0;
    let alpha = lsi_constant_bounded_loss(b, &hp(2.0, 0.1)).unwrap().alpha;
    check(
        "bounded-loss LSI at B = lambda eps / 4",
        (alpha - (-1.0f64).exp() / 0.1).abs() <= TRANSCENDENTAL_TOL,
    );
    check(
        "Lipschitz LSI at M = 0",
        lsi_constant_lipschitz_loss(0.0, &hp(1.0, 0.5), 3).unwrap().alpha == 1.0,
    );
    // M = lambda = 1, d = 1: first branch exp(-4 sqrt(2/pi)), second 1 / (4 + (1 + sqrt 2)^2 * 7 * e^(1/2)).
    let first = (-4.0 * (2.0 / std::f64::consts::PI).sqrt()).exp();
    let second = 1.0 / (4.0 + (1.0 + 2f64.sqrt()).powi(2) * 7.0 * 0.5f64.exp());
    let lip = lsi_constant_lipschitz_loss(1.0, &hp(1.0, 0.5), 1).unwrap().alpha;
    check(
        "Lipschitz LSI at M = lambda",
        (lip - first.max(second)).abs() <= TRANSCENDENTAL_TOL,
    );

    check(
        "variance bound V = 4",
        lemma34_variance_bound(0.0, 1.0, 1.0, 1.0, 1.0).unwrap() == 4.0,
    );
    check(
        "variance bound at delta = 0",
        lemma34_variance_bound(0.3, 1.0, 1.0, 1.0, 0.0).unwrap() == 0.6,
    );

    let p = theorem35_params(0.1, 1.0, 1.0, 1.0).unwrap();
    check("outer delta", p.delta == 0.05);
    let p1 = theorem35_params(1.0, 1.0, 1.0, 0.5).unwrap();
    let p2 = theorem35_params(0.5, 1.0, 1.0, 0.5).unwrap();
    check(
        "outer count 16 V (2 F_gap + L_f2)^2 / varrho^4",
        p1.t_out == 64 && p2.t_out == 1024,
    );
    check("outer step with T_out = 100, V = 4", theorem35_eta(100, 4.0) == 0.05);

    let unit = |varrho: f64, batch: usize| {
        theorem45_params(
            varrho,
            &Theorem45Constants {
                lambda: 1.0,
                epsilon: 1.0,
                alpha: 1.0,
                l_f1: 1.0,
                l_f2: 1.0,
                d: 1,
                n: batch,
                batch,
                f_gap: 1.0,
                grad_gap: 1.0,
                kl0_sum: 1.0,
            },
        )
        .unwrap()
    };
    let beta0 = unit(0.1, 1).beta0;
    check(
        "momentum weight 0.01 / 6",
        (beta0 - 0.01 / 6.0).abs() <= f64::EPSILON * (0.01 / 6.0),
    );
    let (a, h) = (unit(0.5, 1), unit(0.25, 1));
    check(
        "halving varrho quarters beta0, tau, eta",
        h.beta0 * 4.0 == a.beta0 && h.tau * 4.0 == a.tau && h.eta * 4.0 == a.eta,
    );
    check("unit-constant eta, first branch", unit(0.1, 4).eta == 0.1 * 0.1 / 144.0);
    check("unit-constant eta, second branch", unit(1.0, 4).eta == 1.0 / 160.0);
    check("L_G2 = 1 + L_f2 / lambda", unit(0.1, 1).l_g2 == 2.0);

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "all formula checks exact".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    }
}

fn robustness_config(seed: u64, solver: &str) -> ExperimentConfig {
    let text = format!(
        r#"
seed = {seed}
[dataset]
kind = "gauss_blobs"
n_per_class = 100
test_per_class = 1000000
d = 2
separation = 1.0
noise = 0.2
[loss]
kind = "logistic"
[attack]
radii = [0.3]
steps = 20
step_size = 0.25
[solver]
{solver}
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn robustness_direction() -> Outcome {
    const RADIUS: f64 = 0.3;
    const REQUIRED_WINS: usize = 4;
    const PIPELINE_BUDGET: Duration = Duration::from_secs(600);
    let erm = "kind = \"erm\"\nsteps = 4000\neta = 0.1";
    let sdro = "kind = \"sdro_single\"\nt = 4000\ntau = 0.05\neta = 2.0\nbeta0 = 0.2\nbatch = 20\nparticles = 8";
    let mut wins = 0;
    let mut rows = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..5 {
        let mut rates = Vec::new();
        for solver in [erm, sdro] {
            let start = Instant::now();
            let cfg = robustness_config(seed, solver);
            let split = dataset(&cfg).unwrap();
            let theta = train_model(&cfg, &split.train).unwrap().theta;
            let loss = ClassifierLoss::from_spec(&cfg.loss, &split.test).unwrap();
            let report = evaluate_robust_accuracy(
                &theta,
                &split.test,
                loss.loss(),
                loss.classifier(),
                &cfg.attack,
                cfg.solver.name(),
            );
            rates.push(report.rate_at(RADIUS).unwrap());
            slowest = slowest.max(start.elapsed());
        }
        wins += usize::from(rates[1] <= rates[0]);
        rows.push(format!("seed {seed}: erm {:.5} sdro {:.5}", rates[0], rates[1]));
    }
    Outcome {
        pass: wins >= REQUIRED_WINS && slowest < PIPELINE_BUDGET,
        detail: format!(
            "sdro <= erm on {wins}/5 seeds (need {REQUIRED_WINS}), slowest pipeline {:.1}s; {}",
            slowest.as_secs_f64(),
            rows.join("; ")
        ),
    }
}

const DETERMINISM_SOLVERS: [&str; 4] = [
    "kind = \"erm\"\nsteps = 300\neta = 0.1",
    "kind = \"wdro\"\nsteps = 300\neta = 0.1\ninner_steps = 20\nascent_rate = 0.02",
    "kind = \"sdro_double\"\nt_out = 100\neta = 0.1\ntau = 0.01\ninner_steps = 50",
    "kind = \"sdro_single\"\nt = 300\ntau = 0.05\neta = 2.0\nbeta0 = 0.2\nbatch = 10\nparticles = 8",
];

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sdro"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

type Artifacts = Vec<(String, Vec<u8>)>;

fn cli_artifacts(dir: &Path, config: &Path, threads: &str) -> Option<Artifacts> {
    let (cfg, out) = (config.to_str()?, dir.to_str()?);
    if !run_cli(&["train", "--config", cfg, "--out-dir", out, "--threads", threads])
        || !run_cli(&["attack-eval", "--config", cfg, "--out-dir", out, "--threads", threads])
    {
        return None;
    }
    let mut files: Artifacts = fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    Some(files)
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (k, solver) in DETERMINISM_SOLVERS.iter().enumerate() {
        let config = root.path().join(format!("solver{k}.toml"));
        let text = format!(
            "seed = 11\n[dataset]\nkind = \"gauss_blobs\"\nn_per_class = 50\nd = 2\nseparation = 2.0\nnoise = 0.5\n\
             [loss]\nkind = \"logistic\"\n[solver]\n{solver}\n"
        );
        fs::write(&config, text).unwrap();
        let runs: Vec<Option<Artifacts>> = [("a", "1"), ("b", "1"), ("c", "2"), ("d", "4")]
            .iter()
            .map(|(tag, threads)| {
                let dir = root.path().join(format!("{k}{tag}"));
                fs::create_dir_all(&dir).unwrap();
                cli_artifacts(&dir, &config, threads)
            })
            .collect();
        let name = ExperimentConfig::from_toml(&fs::read_to_string(&config).unwrap())
            .unwrap()
            .solver
            .name();
        match &runs[0] {
            None => mismatches.push(format!("{name}: cli failed")),
            Some(reference) => {
                compared += reference.len();
                if runs[1..].iter().any(|r| r.as_ref() != Some(reference)) {
                    mismatches.push(format!("{name}: outputs differ"));
                }
            }
        }
    }
    Outcome {
        pass: mismatches.is_empty() && compared > 0,
        detail: format!(
            "{} solvers, {compared} csv files compared across 4 runs each (threads 1, 1, 2, 4){}",
            DETERMINISM_SOLVERS.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; {}", mismatches.join(", "))
            }
        ),
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "sampler correctness", Duration::from_secs(60), sampler_correctness),
        (
            2,
            "hypergradient consistency",
            Duration::from_secs(300),
            hypergradient_consistency,
        ),
        (
            3,
            "double-loop convergence",
            Duration::from_secs(300),
            double_loop_convergence,
        ),
        (
            4,
            "single-loop convergence",
            Duration::from_secs(600),
            single_loop_convergence,
        ),
        (
            5,
            "estimator bias and variance",
            Duration::from_secs(300),
            estimator_diagnostics,
        ),
        (6, "Wasserstein limit", Duration::from_secs(300), wdro_limit),
        (7, "parameter formulas", Duration::from_secs(10), parameter_formulas),
        (
            8,
            "robustness direction",
            Duration::from_secs(1200),
            robustness_direction,
        ),
        (9, "determinism", Duration::from_secs(600), determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed < budget;
        failed += usize::from(!pass);
        println!(
            "criterion {id} {}: {name} ({:.1}s of {}s) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
