use std::fs;

use popbo::bench::{
    aggregate, cumulative_regret, episode_csv, episode_oracle, episode_path, episode_setup, run, run_episode,
    ConfigOverrides, EpisodeTrace, InstanceKind, ReportRule, RunManifest, RunSpec, Summary,
};
use popbo::domain::Domain;
use popbo::instances::GroundTruth;
use popbo::kernel::KernelSpec;
use popbo::session::{PopBoConfig, Session};

fn gp() -> InstanceKind {
    "gp-se".parse().unwrap()
}

fn spec(instance: InstanceKind, episodes: usize, horizon: usize) -> RunSpec {
    RunSpec { instance, episodes, base_seed: 40, horizon, burn_in: 2, overrides: ConfigOverrides::default() }
}

#[test]
fn single_step_episode() {
    let setup = episode_setup(gp(), 3, &ConfigOverrides::default()).unwrap();
    let trace = run_episode(&setup.config, &setup.truth, 1, 3, setup.report).unwrap();
    assert_eq!(trace.steps.len(), 1);
    let step = &trace.steps[0];
    assert_eq!(step.t, 1);
    assert!(step.regret >= 0.0);
    assert_eq!(step.regret, setup.truth.known_max - setup.truth.eval(&step.x).unwrap());
    assert_eq!(step.t_star, 1);
}

#[test]
fn zero_horizon_is_an_error_with_an_empty_trace() {
    let setup = episode_setup(gp(), 0, &ConfigOverrides::default()).unwrap();
    let failure = run_episode(&setup.config, &setup.truth, 0, 0, setup.report).unwrap_err();
    assert!(failure.partial.steps.is_empty());
}

#[test]
fn constant_truth_has_zero_regret() {
    let domain = Domain::new(vec![[0.0, 2.0]]).unwrap();
    let truth = GroundTruth::constant(domain.clone(), 0.0);
    let config = PopBoConfig::new(KernelSpec::squared_exponential(1.0, 0.5, 1), domain, 1.0);
    let trace = run_episode(&config, &truth, 6, 1, ReportRule::MaxMle).unwrap();
    assert!(trace.steps.iter().all(|s| s.regret == 0.0 && s.report_subopt == 0.0));
    assert!(cumulative_regret(&trace).iter().all(|&r| r == 0.0));
}

#[test]
fn regret_curves_are_nondecreasing() {
    let setup = episode_setup("branin".parse().unwrap(), 2, &ConfigOverrides::default()).unwrap();
    let trace = run_episode(&setup.config, &setup.truth, 8, 2, setup.report).unwrap();
    let cum = cumulative_regret(&trace);
    assert!(cum[0] >= 0.0);
    assert!(cum.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn reruns_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = spec(gp(), 2, 5);
    run(&s, "r", Some(a.path())).unwrap();
    run(&s, "r", Some(b.path())).unwrap();
    for name in ["manifest.json", "summary.json", "episode_40.csv", "episode_41.csv"] {
        let x = fs::read(a.path().join("r").join(name)).unwrap();
        let y = fs::read(b.path().join("r").join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
    let summary: Summary = serde_json::from_slice(&fs::read(a.path().join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.seeds, vec![40, 41]);
    assert_eq!(summary.horizon, 5);
}

#[test]
fn csv_regret_matches_recomputation_from_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    run(&spec("beale".parse().unwrap(), 2, 4), "beale", Some(dir.path())).unwrap();
    let root = dir.path().join("beale");
    let manifest = RunManifest::from_json(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.episodes.len(), 2);
    for ep in &manifest.episodes {
        let mut reader = csv::Reader::from_path(episode_path(&root, ep.seed)).unwrap();
        let header = reader.headers().unwrap().clone();
        let col = |name: &str| header.iter().position(|h| h == name).unwrap();
        let mut cum = 0.0;
        let mut rows = 0;
        for rec in reader.records() {
            let rec = rec.unwrap();
            let x: Vec<f64> = (1..=2).map(|i| rec[col(&format!("x{i}"))].parse().unwrap()).collect();
            let regret = ep.instance.known_max - ep.instance.eval(&x).unwrap();
            cum += regret;
            let stored: f64 = rec[col("regret")].parse().unwrap();
            let stored_cum: f64 = rec[col("cum_regret")].parse().unwrap();
            assert_eq!(stored, regret);
            assert!((stored_cum - cum).abs() <= 1e-12 * (1.0 + cum));
            rows += 1;
        }
        assert_eq!(rows, manifest.horizon);
    }
}

#[test]
fn reports_use_only_past_answers() {
    let seed = 6;
    let setup = episode_setup(gp(), seed, &ConfigOverrides::default()).unwrap();
    let horizon = 6;
    let trace = run_episode(&setup.config, &setup.truth, horizon, seed, setup.report).unwrap();

    let mut session = Session::new(setup.config.clone()).unwrap();
    let mut oracle = episode_oracle(&setup.truth, seed);
    let mut prefs = Vec::new();
    for _ in 0..horizon {
        let duel = session.next_query().unwrap();
        let pref = oracle.compare(&duel.x, &duel.x_prime).unwrap();
        session.observe(pref).unwrap();
        prefs.push(pref);
    }
    for (t, step) in (1..=horizon).zip(&trace.steps) {
        let prefix = Session::replay(setup.config.clone(), &prefs[..t]).unwrap();
        let t_star = prefix.report_t_star().unwrap();
        assert_eq!(step.t_star, t_star.t_star);
        assert_eq!(step.t_star_subopt, setup.truth.suboptimality(&t_star.x).unwrap());
        let max_mle = prefix.report_max_mle().unwrap();
        assert_eq!(step.max_mle_subopt, setup.truth.suboptimality(&max_mle).unwrap());
    }
}

#[test]
fn aggregate_of_one_trace_is_that_trace() {
    let setup = episode_setup(gp(), 1, &ConfigOverrides::default()).unwrap();
    let trace = run_episode(&setup.config, &setup.truth, 3, 1, setup.report).unwrap();
    let summary = aggregate(std::slice::from_ref(&trace), 0).unwrap();
    assert_eq!(summary.cumulative_regret.mean, cumulative_regret(&trace));
    assert!(summary.cumulative_regret.std.iter().all(|&s| s == 0.0));
    assert_eq!(summary.final_report_subopt.std, 0.0);

    let short = EpisodeTrace { steps: trace.steps[..2].to_vec(), ..trace.clone() };
    assert!(aggregate(&[trace, short], 0).is_err());
    assert!(aggregate(&[], 0).is_err());
}

#[test]
fn csv_header_lists_coordinates_and_metrics() {
    let setup = episode_setup("branin".parse().unwrap(), 0, &ConfigOverrides::default()).unwrap();
    let trace = run_episode(&setup.config, &setup.truth, 2, 0, setup.report).unwrap();
    let text = episode_csv(&trace).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,x1,x2,regret,cum_regret,report_radius,t_star,report_subopt,t_star_subopt,max_mle_subopt,norm_bound"
    );
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn instance_does_not_depend_on_optimizer_settings() {
    let plain = episode_setup(gp(), 9, &ConfigOverrides::default()).unwrap();
    let tuned = ConfigOverrides { beta0: Some(2.0), lambda: Some(0.5), norm_scale: Some(3.0), ..Default::default() };
    let other = episode_setup(gp(), 9, &tuned).unwrap();
    assert_eq!(plain.truth, other.truth);
    assert_eq!(plain.config.x0, other.config.x0);
    assert_eq!(other.config.beta0, 2.0);
    assert!((other.config.norm_bound - 3.0 * plain.config.norm_bound).abs() < 1e-12);
}
