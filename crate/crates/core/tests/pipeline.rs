use levy_ou_exit::exit_analytics::{ExitAnalytics, ExitProblem};
use levy_ou_exit::inversion::{survival, InversionConfig};
use levy_ou_exit::levy_model::{LevyModel, NegJumpLaw};
use levy_ou_exit::simulator::{simulate_exit, SimConfig, SimMode};
use levy_ou_exit::stats::McEstimate;
use levy_ou_exit::validation::{mean_check, theorem1_check, theorem2_check, WeightEstimator};
use proptest::prelude::*;

fn analytics(model: LevyModel, x: f64, b: f64) -> ExitAnalytics {
    ExitAnalytics::new(ExitProblem::new(model, x, b).unwrap()).unwrap()
}

#[test]
fn json_model_to_mean() {
    let model =
        LevyModel::from_json(r#"{"beta": 1, "pos_intensity": 1, "pos_jumps": {"type": "exp", "rate": 1}}"#).unwrap();
    let a = analytics(model, 0.0, 2.0);
    assert!((a.mean_exit().unwrap() - 4.683871510540412).abs() < 1e-10);
    let lt = a.laplace_exit(1.0).unwrap().value;
    assert!((lt - 1.0 / (2f64.exp() - 1.0)).abs() < 1e-12);
    assert!((lt + a.laplace_complement(1.0).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn inverted_survival_matches_simulation() {
    let a = analytics(LevyModel::exponential(1.0, 1.0, 1.0), 0.0, 3.0);
    let run = simulate_exit(a.problem(), &SimConfig::new(40_000, 5)).unwrap();
    let n = run.samples.len() as f64;
    for t in [2.0, 8.0, 20.0] {
        let p = survival(&a, t, &InversionConfig::default()).unwrap();
        let empirical = run.samples.iter().filter(|s| s.tau > t).count() as f64 / n;
        let se = (p.survival * (1.0 - p.survival) / n).sqrt();
        assert!(
            (empirical - p.survival).abs() < 4.0 * se + p.err_est,
            "t={t}: {empirical} vs {p:?}"
        );
    }
}

#[test]
fn two_sided_jumps_with_drift() {
    let model = LevyModel::exponential(1.5, 0.8, 2.0)
        .with_drift(0.4)
        .with_neg_jumps(NegJumpLaw::Constant { size: 0.5 }, 0.6);
    let a = analytics(model, 0.0, 1.5);
    let run = simulate_exit(a.problem(), &SimConfig::new(40_000, 11)).unwrap();
    let mean = mean_check(&a, &run.samples).unwrap();
    assert!(mean.z.abs() < 4.0, "{mean:?}");
    let t1 = theorem1_check(&a, &run.samples, 0.7, WeightEstimator::Conditional, None).unwrap();
    assert!(t1.z.abs() < 4.0, "{t1:?}");
}

#[test]
fn diffusion_paths_satisfy_identities() {
    // identities hold with a Brownian part; only the explicit formulas need it absent
    let model = LevyModel::exponential(1.0, 1.0, 1.0).with_volatility(0.5);
    let a = analytics(model, 0.0, 1.5);
    let cfg = SimConfig {
        mode: SimMode::DiffusionEuler,
        dt: 2e-3,
        ..SimConfig::new(20_000, 3)
    };
    let run = simulate_exit(a.problem(), &cfg).unwrap();
    let t1 = theorem1_check(&a, &run.samples, 1.0, WeightEstimator::Conditional, None).unwrap();
    assert!(t1.z.abs() < 4.0, "{t1:?}");
    let t2 = theorem2_check(&a, &run.samples, WeightEstimator::Conditional, None).unwrap();
    assert!(t2.z.abs() < 4.0, "{t2:?}");
    assert!(a.mean_exit().is_err());
}

#[test]
fn exit_times_scale_with_beta() {
    // time change: doubling beta and every intensity halves tau
    let slow = simulate_exit(
        &ExitProblem::new(LevyModel::exponential(1.0, 1.0, 1.0), 0.0, 2.0).unwrap(),
        &SimConfig::new(20_000, 8),
    )
    .unwrap();
    let fast = simulate_exit(
        &ExitProblem::new(LevyModel::exponential(2.0, 2.0, 1.0), 0.0, 2.0).unwrap(),
        &SimConfig::new(20_000, 8),
    )
    .unwrap();
    let m = |r: &levy_ou_exit::simulator::SimulationRun, k: f64| {
        McEstimate::from_values(&r.samples.iter().map(|s| k * s.tau).collect::<Vec<_>>(), 0.0)
    };
    let (a, b) = (m(&slow, 1.0), m(&fast, 2.0));
    assert!((a.mean - b.mean).abs() < 4.0 * a.std_error.hypot(b.std_error));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplace_decreasing_in_mu_and_barrier(
        rate in 0.5f64..3.0,
        intensity in 0.3f64..2.0,
        b in 0.2f64..4.0,
        mu in 0.05f64..3.0,
    ) {
        let model = LevyModel::exponential(1.0, intensity, rate);
        let a = analytics(model, 0.0, b);
        let lt = a.laplace_exit(mu).unwrap().value;
        prop_assert!(lt > 0.0 && lt < 1.0);
        prop_assert!(a.laplace_exit(mu * 1.5).unwrap().value < lt);
        let further = analytics(model, 0.0, b + 0.5);
        prop_assert!(further.laplace_exit(mu).unwrap().value < lt);
        prop_assert!(further.mean_exit().unwrap() > a.mean_exit().unwrap());
    }

    #[test]
    fn mean_above_overshoot_free_bound(rate in 0.5f64..3.0, b in 0.2f64..4.0) {
        let a = analytics(LevyModel::exponential(1.0, 1.0, rate), 0.0, b);
        prop_assert!(a.mean_exit().unwrap() > a.overshoot_free_lower_bound().unwrap());
    }
}
