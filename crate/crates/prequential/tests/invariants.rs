//! Cross-module invariants that need more than one subsystem at once.

use prequential::manipulation::{
    build_game, demonstrate_prop1, pass_probability, pass_probability_with_se, EvalMode,
    StrategyGrid,
};
use prequential::merging::merging_gap;
use prequential::recovery::{reconstruct_prior, MomentVector};
use prequential::testing::{
    build_acceptance_region, composed_test_t, ComposedParams, TestKind, TestSpec,
};
use prequential::theory::{derive_seed, sample_realization, ForecastTrace, Prior};

/// Exact enumeration and Monte Carlo must agree within sampling error on a
/// battery of random instances (the two-route self-consistency check).
#[test]
fn exact_and_monte_carlo_agree_on_battery() {
    let specs = [
        TestSpec::new(10, TestKind::IidFrequency { tol: 0.25 }).unwrap(),
        TestSpec::new(12, TestKind::Calibration { bins: 5, tol: 0.3, min_count: 1 }).unwrap(),
        TestSpec::new(14, TestKind::EventualFrequency { tol: 0.4, burn_in: 4 }).unwrap(),
    ];
    let pairs = [
        (Prior::point(0.5).unwrap(), Prior::point(0.45).unwrap()),
        (Prior::uniform(), Prior::point(0.5).unwrap()),
        (Prior::point(0.3).unwrap(), Prior::uniform()),
        (Prior::beta(2.0, 1.0).unwrap(), Prior::beta(1.0, 2.0).unwrap()),
    ];
    let trials = 100_000u64;
    let mut instances = 0;
    let mut within = 0;
    for (si, spec) in specs.iter().enumerate() {
        for (pi, (expert, truth)) in pairs.iter().enumerate() {
            let exact = pass_probability(expert, truth, spec, &EvalMode::Exact).unwrap();
            let (mc, se) = pass_probability_with_se(
                expert,
                truth,
                spec,
                &EvalMode::MonteCarlo { trials, seed: derive_seed(42, (si * 10 + pi) as u64) },
            )
            .unwrap();
            instances += 1;
            if (mc - exact).abs() <= 4.0 * se.max(1e-4) {
                within += 1;
            }
        }
    }
    assert!(
        within * 100 >= instances * 99,
        "only {within}/{instances} within 4 sigma"
    );
}

/// Every baseline test that accepts theories across the convex hull of the
/// truth grid is manipulable up to solver tolerance. The manipulating side
/// needs mixture theories in its menu: Nature's mixed strategies over point
/// masses are themselves exchangeable theories, and the bound binds exactly
/// when the expert can answer them with theories the test accepts.
#[test]
fn prop1_bound_across_baseline_suite() {
    let grid = StrategyGrid::with_mixture_experts(&[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    let specs = [
        TestSpec::new(8, TestKind::Calibration { bins: 5, tol: 0.15, min_count: 4 }).unwrap(),
        TestSpec::new(8, TestKind::EventualFrequency { tol: 0.45, burn_in: 4 }).unwrap(),
        TestSpec::new(8, TestKind::Likelihood { min_avg_log: -1.0 }).unwrap(),
    ];
    for spec in &specs {
        let report = demonstrate_prop1(spec, &grid, 0.9, &EvalMode::Exact).unwrap();
        assert!(
            report.value >= 1.0 - report.epsilon_measured - 0.01,
            "{spec:?}: value {} vs 1 - {}",
            report.value,
            report.epsilon_measured
        );
        assert!(report.duality_gap <= 1e-6);
    }
}

/// The escape from the bound: the everywhere-constant frequency test
/// accepts every i.i.d. truth on the diagonal yet refuses all mixture
/// theories (their forecasts move), so it resists manipulation by this menu
/// even though the diagonal precondition holds. This mirrors the
/// counterexample status of frequency tests for non-convex paradigms.
#[test]
fn iid_frequency_escapes_prop1_on_nonconvex_paradigm() {
    let grid = StrategyGrid::with_mixture_experts(&[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    let spec = TestSpec::new(8, TestKind::IidFrequency { tol: 0.4 }).unwrap();
    let report = demonstrate_prop1(&spec, &grid, 0.9, &EvalMode::Exact).unwrap();
    assert!(
        report.epsilon_measured <= 0.02,
        "diagonal acceptance should be high: eps {}",
        report.epsilon_measured
    );
    assert!(
        report.value < 1.0 - report.epsilon_measured - 0.01,
        "the frequency test should resist this menu: value {}",
        report.value
    );
}

/// The learnability/testability contrast: the uniform-prior learner merges
/// with a fixed-coin truth (its forecasts converge), yet the composed test
/// fails it on that truth when the coin sits in a gap of the acceptance
/// region recovered from the learner's own forecasts.
#[test]
fn merging_success_coexists_with_test_failure() {
    let params = ComposedParams::default();
    let horizon = 20_000;
    let learner = Prior::uniform();

    // The learner's region is a function of its prior alone; pick the truth
    // inside the widest uncovered gap.
    let moments = MomentVector::new(learner.moments(params.recovery_order)).unwrap();
    let reconstruction =
        reconstruct_prior(&moments, params.grid_size, params.feasibility_threshold).unwrap();
    let region = build_acceptance_region(
        &reconstruction.prior,
        params.quantile_count,
        params.effective_half_width(horizon),
        params.mass_deficit,
    )
    .unwrap();
    let mut gap_mid = None;
    let mut gap_width = 0.0;
    let intervals = region.intervals();
    for w in intervals.windows(2) {
        let width = w[1].0 - w[0].1;
        if width > gap_width {
            gap_width = width;
            gap_mid = Some(0.5 * (w[0].1 + w[1].0));
        }
    }
    let q0 = gap_mid.expect("region does not cover all of [0,1]");
    assert!(gap_width > 0.01, "gap too narrow to target: {gap_width}");
    let truth = Prior::point(q0).unwrap();

    // Merging succeeds: the learner's forecasts approach q0.
    let report = merging_gap(&learner, &truth, &[10, 1000], 100, 3).unwrap();
    assert!(report.mean_abs_gap[1] <= 0.02, "no merging: {:?}", report.mean_abs_gap);
    assert!(report.mean_abs_gap[1] < report.mean_abs_gap[0]);

    // Testing fails: the empirical mean concentrates inside the gap.
    let mut fails = 0;
    let total = 20;
    for seed in 0..total {
        let path = sample_realization(&truth, horizon, 600 + seed);
        let trace = ForecastTrace::generate(&learner, &path).unwrap();
        if !composed_test_t(&trace, &params).is_pass() {
            fails += 1;
        }
    }
    assert!(fails * 10 >= total * 9, "only {fails}/{total} failed at q0 = {q0}");
}

/// Pass probabilities of the composed test behave sensibly on the diagonal:
/// a point-mass expert passes against its own coin and fails against a
/// distant one.
#[test]
fn composed_game_diagonal_structure() {
    let params = ComposedParams {
        recovery_order: 12,
        ..ComposedParams::default()
    };
    let spec = TestSpec::new(2000, TestKind::ComposedT(params)).unwrap();
    let close = Prior::point(0.5).unwrap();
    let far = Prior::point(0.9).unwrap();
    let mode = EvalMode::MonteCarlo { trials: 2000, seed: 9 };
    let diag = pass_probability(&close, &close, &spec, &mode).unwrap();
    let offdiag = pass_probability(&close, &far, &spec, &mode).unwrap();
    assert!(diag >= 0.99, "diagonal pass {diag}");
    assert!(offdiag <= 0.01, "off-diagonal pass {offdiag}");
}

/// The full matrix pipeline: symmetric grids give symmetric games, and the
/// solved mixture is a genuine simplex point.
#[test]
fn solved_mixture_is_simplex_point() {
    let points = StrategyGrid::point_masses(5).unwrap();
    let grid = StrategyGrid::new(points.clone(), points).unwrap();
    let spec = TestSpec::new(10, TestKind::IidFrequency { tol: 0.3 }).unwrap();
    let matrix = build_game(&grid, &spec, &EvalMode::Exact).unwrap();
    let solution = prequential::manipulation::solve_game(&matrix).unwrap();
    let total: f64 = solution.strategy.weights().iter().sum();
    assert!((total - 1.0).abs() <= 1e-10);
    assert!(solution.strategy.weights().iter().all(|&w| w >= 0.0));
    assert!(solution.duality_gap <= 1e-6);
}
