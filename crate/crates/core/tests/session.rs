use popbo::bench::{episode_oracle, episode_setup, ConfigOverrides, InstanceKind};
use popbo::domain::Domain;
use popbo::interpolant::Interpolant;
use popbo::kernel::KernelSpec;
use popbo::likelihood::log_likelihood;
use popbo::session::{Checkpoint, PopBoConfig, Session};
use proptest::prelude::*;

fn config_1d() -> PopBoConfig {
    let mut c = PopBoConfig::new(
        KernelSpec::squared_exponential(1.0, 0.2, 1),
        Domain::new(vec![[0.0, 1.0]]).unwrap(),
        3.0,
    );
    c.x0 = Some(vec![0.3]);
    c.seed = 11;
    c
}

fn config_2d() -> PopBoConfig {
    let mut c = PopBoConfig::new(
        KernelSpec::squared_exponential(1.0, 0.4, 2),
        Domain::new(vec![[0.0, 1.0], [-1.0, 1.0]]).unwrap(),
        2.0,
    );
    c.seed = 5;
    c
}

const PREFS: [bool; 6] = [true, false, true, true, false, true];

#[test]
fn replay_is_deterministic() {
    for config in [config_1d(), config_2d()] {
        let a = Session::replay(config.clone(), &PREFS).unwrap();
        let b = Session::replay(config, &PREFS).unwrap();
        assert_eq!(a.trace(), b.trace());
        assert_eq!(a.checkpoint().to_json().unwrap(), b.checkpoint().to_json().unwrap());
    }
}

#[test]
fn history_is_chained() {
    let s = Session::replay(config_2d(), &PREFS).unwrap();
    let h = s.history();
    assert_eq!(h.len(), PREFS.len());
    let points = h.points();
    for (tau, rec) in s.trace().iter().enumerate() {
        assert_eq!(rec.t, tau + 1);
        assert_eq!(rec.x_prime, points[tau]);
        assert_eq!(rec.x, points[tau + 1]);
    }
    assert_eq!(h.outcomes(), PREFS.to_vec());
}

#[test]
fn checkpoint_round_trip_continues_identically() {
    let mut live = Session::replay(config_1d(), &PREFS[..4]).unwrap();
    live.current_duel().unwrap();
    let text = live.checkpoint().to_json().unwrap();
    let mut restored = Session::restore(&Checkpoint::from_json(&text).unwrap()).unwrap();
    assert_eq!(restored.checkpoint().to_json().unwrap(), text);
    assert_eq!(restored.pending(), live.pending());
    for p in [false, true] {
        live.observe(p).unwrap();
        restored.observe(p).unwrap();
        assert_eq!(live.next_query().unwrap(), restored.next_query().unwrap());
    }
    assert_eq!(live.trace(), restored.trace());
}

#[test]
fn tampered_checkpoint_is_rejected() {
    let s = Session::replay(config_1d(), &PREFS[..3]).unwrap();
    let mut cp = s.checkpoint();
    cp.history.records[1].pref = !cp.history.records[1].pref;
    assert!(Session::restore(&cp).is_err());

    let mut cp = s.checkpoint();
    cp.trace[2].report_radius *= 1.0 + 1e-12;
    assert!(Session::restore(&cp).is_err());

    let mut cp = s.checkpoint();
    cp.trace.pop();
    assert!(Session::restore(&cp).is_err());

    let text = s.checkpoint().to_json().unwrap().replace("popbo-checkpoint", "other");
    assert!(Checkpoint::from_json(&text).is_err());
}

#[test]
fn mle_stays_in_ball_and_beats_the_zero_function() {
    let mut s = Session::new(config_2d()).unwrap();
    for (t, &p) in PREFS.iter().enumerate() {
        s.next_query().unwrap();
        s.observe(p).unwrap();
        let mle = s.mle();
        assert!(mle.constraint_slack >= -1e-9, "slack {}", mle.constraint_slack);
        assert!(mle.objective <= 0.0);
        let zero = -((t + 1) as f64) * 2f64.ln();
        assert!(mle.objective >= zero - 1e-9, "{} < {zero}", mle.objective);
        let recomputed = log_likelihood(&mle.argmax, &s.history().outcomes()).unwrap();
        assert!((recomputed - mle.objective).abs() <= 1e-9 * (1.0 + recomputed.abs()));
        assert_eq!(s.trace().last().unwrap().ell_mle, mle.objective);
    }
}

#[test]
fn max_mle_interpolant_reproduces_fitted_values() {
    let mut config = config_1d();
    config.jitter = 1e-8;
    let s = Session::replay(config, &PREFS).unwrap();
    let f: Interpolant = s.max_mle_interpolant().unwrap();
    for (x, z) in s.history().points().iter().zip(&s.mle().argmax) {
        let v = f.eval(x).unwrap();
        assert!((v - z).abs() <= 1e-6 * (1.0 + z.abs()), "interpolant {v} vs fitted {z}");
    }
}

#[test]
fn report_radius_minimum_never_increases() {
    let s = Session::replay(config_2d(), &PREFS).unwrap();
    let mut prefix = Session::new(config_2d()).unwrap();
    let mut best = f64::INFINITY;
    for &p in &PREFS {
        prefix.next_query().unwrap();
        prefix.observe(p).unwrap();
        let report = prefix.report_t_star().unwrap();
        assert!(report.radius <= best);
        best = report.radius;
        let min = prefix.trace().iter().map(|r| r.report_radius).fold(f64::INFINITY, f64::min);
        assert_eq!(report.radius, min);
        assert_eq!(prefix.trace()[report.t_star - 1].x, report.x);
    }
    assert_eq!(prefix.trace(), s.trace());
}

#[test]
fn max_mle_report_is_competitive_after_ten_steps() {
    let kind: InstanceKind = "gp-se".parse().unwrap();
    let seeds = 30;
    let mut good = 0;
    for seed in 0..seeds {
        let setup = episode_setup(kind, seed, &ConfigOverrides::default()).unwrap();
        let mut session = Session::new(setup.config.clone()).unwrap();
        let mut oracle = episode_oracle(&setup.truth, seed);
        for _ in 0..10 {
            let duel = session.next_query().unwrap();
            let pref = oracle.compare(&duel.x, &duel.x_prime).unwrap();
            session.observe(pref).unwrap();
        }
        let best_seen = session
            .history()
            .points()
            .iter()
            .map(|x| setup.truth.eval(x).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let reported = setup.truth.eval(&session.report_max_mle().unwrap()).unwrap();
        if reported >= best_seen - 0.5 {
            good += 1;
        }
    }
    assert!(good * 10 >= seeds * 8, "only {good}/{seeds} seeds within 0.5 of the best query");
}

#[test]
fn fresh_session_keeps_its_norm_bound() {
    let mut s = Session::new(config_1d()).unwrap();
    assert!(!s.adapt_norm_bound().unwrap());
    assert_eq!(s.norm_bound(), 3.0);
}

/// Fraction of 30 seeded GP episodes of 30 steps in which the norm bound
/// was doubled at least once.
fn doubling_rate(norm_scale: f64) -> f64 {
    let kind: InstanceKind = "gp-se".parse().unwrap();
    let overrides = ConfigOverrides { norm_scale: Some(norm_scale), adapt_norm_bound: true, ..Default::default() };
    let mut doubled = 0;
    for seed in 0..30 {
        let setup = episode_setup(kind, seed, &overrides).unwrap();
        let mut session = Session::new(setup.config.clone()).unwrap();
        let mut oracle = episode_oracle(&setup.truth, seed);
        for _ in 0..30 {
            let duel = session.next_query().unwrap();
            let pref = oracle.compare(&duel.x, &duel.x_prime).unwrap();
            session.observe(pref).unwrap();
        }
        if session.trace().iter().any(|r| r.doubled) {
            assert!(session.norm_bound() > setup.config.norm_bound);
            doubled += 1;
        }
    }
    doubled as f64 / 30.0
}

#[test]
fn doubling_is_rare_with_a_correct_bound() {
    let rate = doubling_rate(1.0);
    assert!(rate <= 0.10, "doubled in {:.0}% of runs", 100.0 * rate);
}

#[test]
fn doubling_catches_a_halved_bound() {
    let rate = doubling_rate(0.5);
    assert!(rate >= 0.50, "doubled in only {:.0}% of runs", 100.0 * rate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn episodes_are_functions_of_config_and_answers(
        prefs in proptest::collection::vec(any::<bool>(), 1..6),
        seed in any::<u64>(),
    ) {
        let mut config = config_1d();
        config.seed = seed;
        let a = Session::replay(config.clone(), &prefs).unwrap();
        let b = Session::replay(config, &prefs).unwrap();
        prop_assert_eq!(a.trace(), b.trace());
        let restored = Session::restore(&a.checkpoint()).unwrap();
        prop_assert_eq!(restored.trace(), a.trace());
    }
}
