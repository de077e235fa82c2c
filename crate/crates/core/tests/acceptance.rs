//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use popbo::bench::{aggregate, episode_oracle, episode_setup, run_episode, ConfigOverrides, EpisodeTrace, InstanceKind};
use popbo::kernel::{cholesky, duel_gram, duel_sigma, gram, Duel, KernelSpec, DEFAULT_JITTER};
use popbo::likelihood::{grad_log_likelihood, log_likelihood, shift};
use popbo::session::{beta1, Session};
use popbo::solver::{solve_acquisition_inner, solve_mle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 30;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn episodes(kind: &str, horizon: usize) -> Vec<EpisodeTrace> {
    let kind: InstanceKind = kind.parse().expect("known instance");
    (0..SEEDS)
        .map(|seed| {
            let setup = episode_setup(kind, seed, &ConfigOverrides::default()).expect("episode setup");
            run_episode(&setup.config, &setup.truth, horizon, seed, setup.report).expect("episode runs")
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn regret_growth(gp: &[EpisodeTrace]) -> Outcome {
    let slope = aggregate(gp, 5).expect("aggregate").regret_slope;
    Outcome {
        name: "regret growth order",
        pass: slope.is_some_and(|s| (0.5..1.0).contains(&s)),
        detail: format!("mean cumulative-regret log-log slope {slope:?}, want [0.5, 1.0)"),
    }
}

fn report_convergence(gp: &[EpisodeTrace]) -> Outcome {
    let at = |t: usize, f: fn(&popbo::bench::StepOutcome) -> f64| median(gp.iter().map(|e| f(&e.steps[t - 1])).collect());
    let t_star = (at(5, |s| s.t_star_subopt), at(30, |s| s.t_star_subopt));
    let max_mle = (at(5, |s| s.max_mle_subopt), at(30, |s| s.max_mle_subopt));
    Outcome {
        name: "reported-solution convergence",
        pass: t_star.1 < t_star.0 && max_mle.1 < max_mle.0,
        detail: format!(
            "median suboptimality T=5 -> T=30: t-star {:.4} -> {:.4}, max-MLE {:.4} -> {:.4}",
            t_star.0, t_star.1, max_mle.0, max_mle.1
        ),
    }
}

fn final_mean(runs: &[EpisodeTrace]) -> f64 {
    runs.iter().map(|e| e.steps.last().unwrap().report_subopt).sum::<f64>() / runs.len() as f64
}

fn test_functions() -> Outcome {
    let beale = final_mean(&episodes("beale", 30));
    let branin = final_mean(&episodes("branin", 30));
    Outcome {
        name: "test-function suboptimality",
        pass: beale <= 0.20 && branin <= 0.8,
        detail: format!("mean final reported suboptimality: beale {beale:.4} (<= 0.20), branin {branin:.4} (<= 0.8)"),
    }
}

fn coverage() -> Outcome {
    let kind: InstanceKind = "gp-se".parse().unwrap();
    let (mut covered, mut total) = (0, 0);
    for seed in 0..SEEDS {
        let setup = episode_setup(kind, seed, &ConfigOverrides::default()).unwrap();
        let beta0 = setup.config.beta0;
        let mut session = Session::new(setup.config).unwrap();
        let mut oracle = episode_oracle(&setup.truth, seed);
        for t in 1..=30 {
            let duel = session.next_query().unwrap();
            let pref = oracle.compare(&duel.x, &duel.x_prime).unwrap();
            session.observe(pref).unwrap();
            let values: Vec<f64> =
                session.history().points().iter().map(|x| setup.truth.eval(x).unwrap()).collect();
            let truth_ll = log_likelihood(&values, &session.history().outcomes()).unwrap();
            total += 1;
            if truth_ll >= session.mle().objective - beta1(t, beta0) {
                covered += 1;
            }
        }
    }
    let rate = covered as f64 / total as f64;
    Outcome {
        name: "confidence coverage",
        pass: rate >= 0.9,
        detail: format!("truth inside the likelihood set in {covered}/{total} = {:.1}% of (seed, t) pairs", 100.0 * rate),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let inst = common::random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let points = inst.history.points();
        let outcomes = inst.history.outcomes();
        let mle = solve_mle(&inst.history, &inst.kernel, inst.radius, DEFAULT_JITTER).unwrap();
        let mle_ref = common::mle_oracle(&inst.kernel, &points, &outcomes, inst.radius, DEFAULT_JITTER);
        let adv = solve_acquisition_inner(
            &inst.candidate,
            &inst.history,
            &inst.kernel,
            inst.radius,
            inst.beta,
            mle.objective,
            DEFAULT_JITTER,
        )
        .unwrap();
        let floor = mle.objective - inst.beta;
        let adv_ref =
            common::advantage_oracle(&inst.kernel, &points, &outcomes, &inst.candidate, inst.radius, floor, DEFAULT_JITTER);
        worst = worst.max((mle.objective - mle_ref).abs()).max((adv.objective - adv_ref).abs());
    }
    Outcome {
        name: "oracle equivalence",
        pass: worst <= 1e-3,
        detail: format!("largest gap to grid oracles over 50 instances {worst:.2e} (<= 1e-3)"),
    }
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
}

fn random_outcomes(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(0.5)).collect()
}

fn random_kernel(rng: &mut ChaCha8Rng, dim: usize) -> KernelSpec {
    match rng.random_range(0..3) {
        0 => KernelSpec::squared_exponential(rng.random_range(0.2..9.0), rng.random_range(0.2..3.0), dim),
        1 => KernelSpec::matern([0.5, 1.5, 2.5][rng.random_range(0..3)], rng.random_range(0.2..3.0), dim),
        _ => KernelSpec::linear(dim),
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        if !pts.is_empty() && rng.random_bool(0.25) {
            let i = rng.random_range(0..pts.len());
            pts.push(pts[i].clone());
        } else {
            pts.push((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect());
        }
    }
    pts
}

fn analytic_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    let mut shift_gap: f64 = 0.0;
    for _ in 0..100 {
        let z = random_values(&mut rng, 6);
        let o = random_outcomes(&mut rng, 5);
        let c = rng.random_range(-50.0..50.0);
        shift_gap = shift_gap.max((log_likelihood(&shift(&z, c), &o).unwrap() - log_likelihood(&z, &o).unwrap()).abs());
    }
    if shift_gap > 1e-10 {
        failures.push(format!("shift gap {shift_gap:.1e}"));
    }

    let mut concavity_violation: f64 = 0.0;
    for _ in 0..100 {
        let (a, b) = (random_values(&mut rng, 6), random_values(&mut rng, 6));
        let o = random_outcomes(&mut rng, 5);
        let theta = rng.random_range(0.0..1.0);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect();
        let lhs = log_likelihood(&mix, &o).unwrap();
        let rhs = theta * log_likelihood(&a, &o).unwrap() + (1.0 - theta) * log_likelihood(&b, &o).unwrap();
        concavity_violation = concavity_violation.max(rhs - lhs);
    }
    if concavity_violation > 1e-10 {
        failures.push(format!("concavity violated by {concavity_violation:.1e}"));
    }

    let mut grad_error: f64 = 0.0;
    for _ in 0..100 {
        let z = random_values(&mut rng, 6);
        let o = random_outcomes(&mut rng, 5);
        let g = grad_log_likelihood(&z, &o).unwrap();
        for i in 0..z.len() {
            let h = 1e-5 * z[i].abs().max(1.0);
            let (mut up, mut down) = (z.clone(), z.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (log_likelihood(&up, &o).unwrap() - log_likelihood(&down, &o).unwrap()) / (2.0 * h);
            grad_error = grad_error.max((g[i] - fd).abs() / g[i].abs().max(1e-3));
        }
    }
    if grad_error > 1e-5 {
        failures.push(format!("gradient relative error {grad_error:.1e}"));
    }

    let mut sigma_increase: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let kernel = random_kernel(&mut rng, dim);
        let pts = random_points(&mut rng, 14, dim);
        let duels: Vec<Duel> = pts.chunks(2).map(|p| Duel::new(p[0].clone(), p[1].clone())).collect();
        let (omega, past) = duels.split_last().unwrap();
        let lambda = rng.random_range(0.1..2.0);
        let mut previous = duel_sigma(&kernel, &[], lambda, omega).unwrap();
        for k in 1..=past.len() {
            let sigma = duel_sigma(&kernel, &past[..k], lambda, omega).unwrap();
            sigma_increase = sigma_increase.max(sigma - previous);
            previous = sigma;
        }
    }
    if sigma_increase > 1e-8 {
        failures.push(format!("duel_sigma grew by {sigma_increase:.1e}"));
    }

    let mut min_eigen = f64::INFINITY;
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let kernel = random_kernel(&mut rng, dim);
        let n = rng.random_range(1..=12);
        let pts = random_points(&mut rng, n, dim);
        let k = gram(&kernel, &pts, DEFAULT_JITTER).unwrap();
        if cholesky(k.clone()).is_err() {
            failures.push("jittered Gram failed Cholesky".into());
        }
        min_eigen = min_eigen.min(SymmetricEigen::new(k).eigenvalues.min());
        let duels: Vec<Duel> = pts.windows(2).map(|p| Duel::new(p[0].clone(), p[1].clone())).collect();
        if !duels.is_empty() {
            let m = duels.len();
            let dg = duel_gram(&kernel, &duels).unwrap() + nalgebra::DMatrix::identity(m, m) * DEFAULT_JITTER;
            min_eigen = min_eigen.min(SymmetricEigen::new(dg).eigenvalues.min());
        }
    }
    if min_eigen < 0.0 {
        failures.push(format!("Gram eigenvalue {min_eigen:.1e}"));
    }

    Outcome {
        name: "analytic invariants",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "shift {shift_gap:.1e}, concavity {concavity_violation:.1e}, gradient {grad_error:.1e}, \
                 sigma growth {sigma_increase:.1e}, min Gram eigenvalue {min_eigen:.1e}"
            )
        } else {
            failures.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let gp = episodes("gp-se", 100);
    let outcomes = [
        regret_growth(&gp),
        report_convergence(&gp),
        test_functions(),
        coverage(),
        oracle_equivalence(),
        analytic_invariants(),
    ];
    let mut ok = true;
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        ok &= o.pass;
    }
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
