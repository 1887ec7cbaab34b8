//! Acceptance suite: one PASS/FAIL line per criterion with the measured value,
//! its tolerance, and the wall time against the allowed limit.
//!
//! Runs with `harness = false` so the lines always reach stdout.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use vrcrpn::cubic::{check_optimality, solve_cubic, DEFAULT_TOL};
use vrcrpn::estimators::{
    correction_point, hvp_correction_term, trajectory_gradient, trajectory_hessian, trajectory_legacy_hessian,
    truncation_horizon, SmoothnessConstants,
};
use vrcrpn::linalg::{sym_min_eigenvalue, sym_spectral_norm};
use vrcrpn::mdp::{policy_derivative_bounds, sample_trajectory, LogLinearPolicy, TabularFeatures, TabularMdp};
use vrcrpn::optimizer::{plan_hyperparams, sample_budget, vr_cr_pn, ExactTabular, Mode, SampleBudget, Termination};
use vrcrpn::oracle::{enumerate, exact_derivatives, fd_directional};
use vrcrpn::rng::StreamKey;
use vrcrpn_bench::config::ExperimentConfig;
use vrcrpn_bench::{run_config_file, RunOverrides};

type Policy = LogLinearPolicy<TabularFeatures>;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Id, name, runtime limit in seconds, check.
type Criterion = (&'static str, &'static str, u64, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Two states, two actions, rewards within [-1, 1], features scaled so the
/// policy derivative bounds are all 1.
fn test_mdp() -> (TabularMdp, Policy) {
    let mdp = TabularMdp::new(
        2,
        2,
        vec![0.7, 0.3, 0.2, 0.8, 0.4, 0.6, 0.9, 0.1],
        vec![1.0, -0.5, 0.25, 0.8],
        vec![0.5, 0.5],
    )
    .unwrap();
    (mdp, LogLinearPolicy::new(TabularFeatures::new(2, 2, 0.5).unwrap()))
}

fn constants(gamma: f64) -> SmoothnessConstants {
    SmoothnessConstants::new(1.0, gamma, policy_derivative_bounds(0.5).unwrap()).unwrap()
}

fn uniform_vec(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(lo..hi))
}

fn unit_vec(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    loop {
        let v = uniform_vec(rng, d, -1.0, 1.0);
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

fn max_abs_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn estimator_unbiasedness() -> Outcome {
    let (mdp, policy) = test_mdp();
    let (gamma, h) = (0.9, 4);
    let mut rng = StreamKey::root(101).rng();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let theta = uniform_vec(&mut rng, 4, -2.0, 2.0);
        let dist = enumerate(&mdp, &policy, &theta, h).unwrap();
        let exact = exact_derivatives(&mdp, &policy, &theta, gamma, h).unwrap();
        let g = dist.expect_vec(4, |t| trajectory_gradient(&policy, &theta, t, gamma, h));
        let hess = dist.expect_mat(4, |t| trajectory_hessian(&policy, &theta, t, gamma, h));
        worst = worst.max((g - &exact.gradient).amax()).max(max_abs_mat(&hess, &exact.hessian));
    }
    outcome(worst <= 1e-9, format!("max |E[estimate] - exact| = {worst:.2e} (tol 1e-9)"))
}

fn hessian_identity() -> Outcome {
    let (mdp, policy) = test_mdp();
    let (gamma, h) = (0.9, 4);
    let mut rng = StreamKey::root(102).rng();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let theta = uniform_vec(&mut rng, 4, -2.0, 2.0);
        let dist = enumerate(&mdp, &policy, &theta, h).unwrap();
        let new = dist.expect_mat(4, |t| trajectory_hessian(&policy, &theta, t, gamma, h));
        let legacy = dist.expect_mat(4, |t| trajectory_legacy_hessian(&policy, &theta, t, gamma, h));
        worst = worst.max(max_abs_mat(&new, &legacy));
    }
    outcome(worst <= 1e-9, format!("max |E[new] - E[legacy]| = {worst:.2e} (tol 1e-9)"))
}

/// Five-state chain with reward 1 everywhere; action 1 advances, action 0 stays.
fn constant_reward_chain() -> (TabularMdp, Policy) {
    let n = 5;
    let mut transition = vec![0.0; n * 2 * n];
    for s in 0..n {
        transition[(s * 2) * n + s] = 1.0;
        transition[(s * 2 + 1) * n + (s + 1).min(n - 1)] = 1.0;
    }
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    let mdp = TabularMdp::new(n, 2, transition, vec![1.0; n * 2], init).unwrap();
    (mdp, LogLinearPolicy::new(TabularFeatures::new(n, 2, 0.5).unwrap()))
}

fn horizon_independent_bound() -> Outcome {
    let (mdp, policy) = constant_reward_chain();
    let gamma = 0.9;
    let l2 = constants(gamma).l2;
    let theta = DVector::zeros(10);
    let mut violations = 0;
    let mut new_max = 0.0f64;
    let mut legacy_max = Vec::new();
    for (j, &h) in [4usize, 16, 64].iter().enumerate() {
        let mut lm = 0.0f64;
        for i in 0..1000u64 {
            let key = StreamKey::root(103).child(j as u64).child(i);
            let t = sample_trajectory(&mdp, &policy, &theta, h, &mut key.rng()).unwrap();
            let n = sym_spectral_norm(&trajectory_hessian(&policy, &theta, &t, gamma, h));
            new_max = new_max.max(n);
            if n > l2 {
                violations += 1;
            }
            lm = lm.max(sym_spectral_norm(&trajectory_legacy_hessian(&policy, &theta, &t, gamma, h)));
        }
        legacy_max.push(lm);
    }
    let increasing = legacy_max.windows(2).all(|w| w[1] > w[0]);
    outcome(
        violations == 0 && increasing,
        format!(
            "new max norm {new_max:.3} <= L2 = {l2:.1} with {violations} violations; legacy max norms {:.3} / {:.3} / {:.3} at H = 4 / 16 / 64",
            legacy_max[0], legacy_max[1], legacy_max[2]
        ),
    )
}

fn constants_and_third_derivative() -> Outcome {
    let bounds = policy_derivative_bounds(0.5).unwrap();
    let c = SmoothnessConstants::new(1.0, 0.5, bounds).unwrap();
    let consts_ok = (bounds.g1, bounds.g2, bounds.g3) == (1.0, 1.0, 1.0) && (c.l0, c.l1, c.l2, c.l3) == (2.0, 4.0, 20.0, 68.0);
    let (mdp, policy) = test_mdp();
    let (gamma, h) = (0.5, 30);
    let mut rng = StreamKey::root(104).rng();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta = uniform_vec(&mut rng, 4, -3.0, 3.0);
        let y = unit_vec(&mut rng, 4);
        let hess = |x: &DVector<f64>| exact_derivatives(&mdp, &policy, x, gamma, h).unwrap().hessian;
        let third = fd_directional(hess, &theta, &y, 1e-4).unwrap();
        worst = worst.max(sym_spectral_norm(&third));
    }
    outcome(
        consts_ok && worst <= c.l3,
        format!(
            "(L0, L1, L2, L3) = ({}, {}, {}, {}); max directional third derivative {worst:.4} <= L3 = {}",
            c.l0, c.l1, c.l2, c.l3, c.l3
        ),
    )
}

/// Global minimizer of `g h + lam h^2 / 2 + m |h|^3 / 6` by a dense grid
/// followed by Newton polishing on the stationarity equation.
fn scalar_cubic_oracle(g: f64, lam: f64, m: f64) -> f64 {
    let f = |h: f64| g * h + 0.5 * lam * h * h + m * h.abs().powi(3) / 6.0;
    let reach = 2.0 * (lam.abs() + (lam * lam + 2.0 * m * g.abs()).sqrt()) / m + 1.0;
    let n = 200_000;
    let mut best = 0.0;
    for i in 0..=n {
        let h = -reach + 2.0 * reach * i as f64 / n as f64;
        if f(h) < f(best) {
            best = h;
        }
    }
    let mut h = best;
    for _ in 0..50 {
        let d1 = g + lam * h + 0.5 * m * h.abs() * h;
        let d2 = lam + m * h.abs();
        if d2 <= 0.0 {
            break;
        }
        let next = h - d1 / d2;
        if f(next) > f(h) {
            break;
        }
        h = next;
    }
    h
}

fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn cubic_certification() -> Outcome {
    let mut rng = StreamKey::root(105).rng();
    let dims = [1usize, 2, 4, 8];
    let ms = [0.5, 3.0, 30.0];
    let (mut worst_res, mut worst_psd, mut worst_decrease, mut worst_scalar) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for i in 0..200 {
        let d = dims[i % 4];
        let m = ms[(i / 4) % 3];
        let q = random_orthogonal(&mut rng, d);
        let lams = uniform_vec(&mut rng, d, -3.0, 3.0);
        let h = &q * DMatrix::from_diagonal(&lams) * q.transpose();
        let h = (&h + h.transpose()) * 0.5;
        let g = uniform_vec(&mut rng, d, -2.0, 2.0);
        let sol = solve_cubic(&g, &h, m, DEFAULT_TOL).unwrap();
        let (res, psd) = check_optimality(&g, &h, m, &sol.h);
        worst_res = worst_res.max(res);
        worst_psd = worst_psd.min(psd);
        worst_decrease = worst_decrease.max(sol.model_value + m / 12.0 * sol.h.norm().powi(3));
        if d == 1 {
            let oracle = scalar_cubic_oracle(g[0], h[(0, 0)], m);
            worst_scalar = worst_scalar.max((sol.h[0] - oracle).abs());
        }
    }
    outcome(
        worst_res <= 1e-8 && worst_psd >= -1e-8 && worst_decrease <= 1e-10 && worst_scalar <= 1e-6,
        format!(
            "residual {worst_res:.2e} (<= 1e-8), psd margin {worst_psd:.2e} (>= -1e-8), m(h) + M|h|^3/12 <= {worst_decrease:.2e} (<= 1e-10), scalar oracle gap {worst_scalar:.2e} (<= 1e-6)"
        ),
    )
}

fn correction_unbiasedness() -> Outcome {
    let (mdp, policy) = test_mdp();
    let (gamma, h) = (0.9, 4);
    let nodes = 1000;
    let mut rng = StreamKey::root(106).rng();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let theta_t = uniform_vec(&mut rng, 4, -2.0, 2.0);
        let h_prev = unit_vec(&mut rng, 4) * rng.random_range(0.1..1.5);
        let mut avg = DVector::zeros(4);
        for k in 0..nodes {
            let alpha = (k as f64 + 0.5) / nodes as f64;
            let at = correction_point(&theta_t, &h_prev, alpha);
            let dist = enumerate(&mdp, &policy, &at, h).unwrap();
            avg += dist.expect_vec(4, |t| hvp_correction_term(&policy, &theta_t, &h_prev, alpha, t, gamma, h).unwrap());
        }
        avg /= nodes as f64;
        let now = exact_derivatives(&mdp, &policy, &theta_t, gamma, h).unwrap().gradient;
        let before = exact_derivatives(&mdp, &policy, &(&theta_t - &h_prev), gamma, h).unwrap().gradient;
        worst = worst.max((avg - (now - before)).amax());
    }
    outcome(worst <= 1e-4, format!("max |alpha-grid mean - gradient difference| = {worst:.2e} (tol 1e-4)"))
}

fn oracle_convergence() -> Outcome {
    let (mdp, policy) = test_mdp();
    let gamma = 0.9;
    let eps = 0.05;
    let c = constants(gamma);
    let cfg = plan_hyperparams(eps, 0.1, &c, 4, Mode::Theory, None).unwrap();
    let oracle = ExactTabular::new(&mdp, &policy, gamma, cfg.horizon).unwrap();
    let mut rng = StreamKey::root(107).rng();
    let (mut ok, mut max_iters, mut max_grad, mut min_eig) = (true, 0usize, 0.0f64, f64::INFINITY);
    for _ in 0..5 {
        let theta0 = uniform_vec(&mut rng, 4, -2.0, 2.0);
        let rec = vr_cr_pn(&oracle, &theta0, &cfg).unwrap();
        let e = exact_derivatives(&mdp, &policy, &rec.theta, gamma, cfg.horizon).unwrap();
        ok &= rec.termination == Termination::StepNorm && rec.iterations.len() as u64 <= cfg.max_iterations;
        max_iters = max_iters.max(rec.iterations.len());
        max_grad = max_grad.max(e.gradient.norm());
        min_eig = min_eig.min(sym_min_eigenvalue(&e.hessian));
    }
    let eig_floor = -9.0 * (c.l3 * eps).sqrt();
    ok &= max_grad <= 6.0 * eps && min_eig >= eig_floor;
    outcome(
        ok,
        format!(
            "M = {:.1} H = {}: step-norm stop in <= {max_iters} iterations (T = {}), |grad| <= {max_grad:.4} (<= {:.2}), lambda_min >= {min_eig:.4} (>= {eig_floor:.4})",
            cfg.m,
            cfg.horizon,
            cfg.max_iterations,
            6.0 * eps
        ),
    )
}

fn cartpole_reproduction() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cartpole.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let resolved = cfg.resolve().unwrap();
    let setup_ok = resolved.algo.mode == Mode::Practical && resolved.algo.sample_cap == Some(50_000) && resolved.seeds.len() >= 10;
    let out = tempfile::tempdir().unwrap();
    let overrides = RunOverrides { out_dir: Some(out.path().to_path_buf()), ..RunOverrides::default() };
    let (_, outcomes) = run_config_file(&path, &overrides).unwrap();
    let stats = |name: &str| {
        let r: Vec<f64> = outcomes.iter().filter(|o| o.algorithm.name() == name).map(|o| o.evaluation.mean_return).collect();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let std = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (mean, std, r.len())
    };
    let (vm, vs, vn) = stats("vr-cr-pn");
    let (cm, cs, cn) = stats("cr-pn");
    let capped = outcomes.iter().all(|o| o.record.total_samples() <= 50_000);
    outcome(
        setup_ok && capped && vm >= cm && vs <= cs,
        format!(
            "VR-CR-PN {vm:.4} ± {vs:.4} (n = {vn}) vs CR-PN {cm:.4} ± {cs:.4} (n = {cn}); gap {:.4}; needs mean >= and std <=",
            vm - cm
        ),
    )
}

fn planner_accounting() -> Outcome {
    // totals re-derived in 50-digit arithmetic from the closed forms
    let table: [(f64, u64, u64); 4] = [
        (0.2, 37_375_301_261, 9_984_246_365),
        (0.1, 340_082_474_781, 105_568_493_880),
        (0.05, 3_423_607_124_152, 959_622_414_719),
        (0.025, 32_998_075_143_200, 8_846_696_100_542),
    ];
    let c = SmoothnessConstants::new(1.0, 0.5, policy_derivative_bounds(0.5).unwrap()).unwrap();
    let mut mismatches = 0;
    let mut pts = Vec::new();
    for (eps, grad, hess) in table {
        let cfg = plan_hyperparams(eps, 0.1, &c, 4, Mode::Theory, None).unwrap();
        match sample_budget(&cfg, &c).unwrap() {
            SampleBudget::Planned { gradient_total, hessian_total } => {
                if (gradient_total, hessian_total) != (grad, hess) {
                    mismatches += 1;
                }
                pts.push((eps.ln(), (gradient_total as f64).ln()));
            }
            SampleBudget::Realized => mismatches += 1,
        }
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    outcome(
        mismatches == 0 && (-3.5..=-3.0).contains(&slope),
        format!("{mismatches} mismatches over 4 accuracies; log-log slope {slope:.4} (in [-3.5, -3.0])"),
    )
}

fn truncation_bound() -> Outcome {
    let (mdp, policy) = test_mdp();
    let (gamma, eps) = (0.9, 0.2);
    let c = constants(gamma);
    let h = truncation_horizon(gamma, eps, c.bounds.g1, c.bounds.g2, c.r_max, c.l3).unwrap();
    let mut rng = StreamKey::root(110).rng();
    let (mut gg, mut hg) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let theta = uniform_vec(&mut rng, 4, -2.0, 2.0);
        let a = exact_derivatives(&mdp, &policy, &theta, gamma, h).unwrap();
        let b = exact_derivatives(&mdp, &policy, &theta, gamma, 2 * h).unwrap();
        gg = gg.max((a.gradient - b.gradient).norm());
        hg = hg.max(sym_spectral_norm(&(a.hessian - b.hessian)));
    }
    let hess_tol = 0.5 * (c.l3 * eps).sqrt();
    outcome(
        h == 198 && gg <= eps / 2.0 && hg <= hess_tol,
        format!("H = {h} (expected 198); gradient gap {gg:.2e} (<= {:.2}), Hessian gap {hg:.2e} (<= {hess_tol:.4})", eps / 2.0),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1", "estimator unbiasedness", 10, estimator_unbiasedness),
        ("2", "new/legacy Hessian identity", 10, hessian_identity),
        ("3", "horizon-independent Hessian norm bound", 60, horizon_independent_bound),
        ("4", "smoothness constants and third derivative", 30, constants_and_third_derivative),
        ("5", "cubic solver certification", 30, cubic_certification),
        ("6", "HVP correction unbiasedness", 60, correction_unbiasedness),
        ("7", "oracle-mode convergence", 120, oracle_convergence),
        ("8", "CartPole comparison", 1800, cartpole_reproduction),
        ("9", "planned sample totals", 1, planner_accounting),
        ("10", "truncation bound", 60, truncation_bound),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let started = Instant::now();
        let out = check();
        let elapsed = started.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {} [{:.2} s, limit {limit} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
