//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). Every tolerance, horizon, seed
//! count, and runtime budget is pinned here.

use std::time::Instant;

use prequential::harness::{run_experiment, ExperimentConfig};
use prequential::manipulation::{
    demonstrate_prop1, fictitious_play, manipulation_curve, solve_game, EvalMode, GameMatrix,
    StrategyGrid,
};
use prequential::recovery::{hausdorff_check, recover_moments};
use prequential::testing::{ComposedParams, TestKind, TestSpec};
use prequential::theory::{
    derive_seed, sample_realization, ForecastTrace, GridPrior, Prior,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {n} ({name}): {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

/// Criterion 1: moment recovery round-trips 200 random rational grid priors
/// at order 12 — bit-exactly in the rational lane, to 1e-8 in floats —
/// within 10 seconds.
#[test]
fn acceptance_1_recovery_roundtrip() {
    let start = Instant::now();
    let config = ExperimentConfig::from_json_str(
        r#"{
            "experiment": "recovery-roundtrip",
            "master_seed": 20260810,
            "replications": 1,
            "params": {
                "priors": 200,
                "max_atoms": 6,
                "order": 12,
                "horizon": 24,
                "float_tol": 1e-8
            }
        }"#,
    )
    .unwrap();
    let record = run_experiment(&config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let max_err = record.summary["max_float_error"].as_f64().unwrap();
    let exact_ok = record.summary["all_exact_ok"] == true;
    let ok = exact_ok && max_err <= 1e-8 && elapsed <= 10.0;
    report(
        1,
        "recovery round-trip",
        ok,
        &format!("exact lane bit-exact: {exact_ok}, max float error {max_err:.2e}, {elapsed:.2} s"),
    );
    assert!(exact_ok, "exact lane must round-trip bit-exactly");
    assert!(max_err <= 1e-8, "float error {max_err} exceeds 1e-8");
    assert!(elapsed <= 10.0, "took {elapsed:.2} s > 10 s");
}

/// Criterion 2: moments recovered from different paths of the same prior
/// agree to 1e-10 — the single-trace determination made finite — within
/// 10 seconds.
#[test]
fn acceptance_2_path_independence() {
    let start = Instant::now();
    let order = 12;
    let mut worst = 0.0_f64;
    for p in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7_100, p));
        // Non-degenerate interior grids so sampled paths genuinely differ.
        let atoms = 2 + rng.random_range(0..4);
        let mut points: Vec<f64> = (0..atoms)
            .map(|i| 0.1 + 0.8 * (i as f64 + rng.random::<f64>() * 0.8) / atoms as f64)
            .collect();
        points.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let weights: Vec<f64> = (0..points.len()).map(|_| 1.0 + rng.random::<f64>()).collect();
        let prior = Prior::Grid(GridPrior::new_normalized(points, weights).unwrap());

        let mut reference: Option<Vec<f64>> = None;
        let mut seen = std::collections::HashSet::new();
        let mut path_seed = 0u64;
        while seen.len() < 10 {
            let path = sample_realization(&prior, 30, derive_seed(p * 1000, path_seed));
            path_seed += 1;
            assert!(path_seed < 500, "could not find 10 distinct paths");
            if !seen.insert(path.to_string()) {
                continue;
            }
            let trace = ForecastTrace::generate(&prior, &path).unwrap();
            let m = recover_moments(&trace, order, 1e-9).unwrap();
            match &reference {
                None => reference = Some(m.as_slice().to_vec()),
                Some(r) => {
                    for (a, b) in m.as_slice().iter().zip(r) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-10 && elapsed <= 10.0;
    report(
        2,
        "path independence",
        ok,
        &format!("max cross-path moment deviation {worst:.2e}, {elapsed:.2} s"),
    );
    assert!(worst <= 1e-10, "deviation {worst} exceeds 1e-10");
    assert!(elapsed <= 10.0, "took {elapsed:.2} s > 10 s");
}

/// Criterion 3: the composed test accepts an informed uniform-prior
/// forecaster on Beta(1,1) truths at N = 10^4 in at least 90% of 500 seeds,
/// within 2 minutes.
#[test]
fn acceptance_3_informed_pass() {
    let start = Instant::now();
    let config = ExperimentConfig::from_json_str(
        r#"{
            "experiment": "informed-pass",
            "master_seed": 31337,
            "replications": 500,
            "params": {
                "horizon": 10000,
                "truth": {"kind": "beta", "alpha": 1.0, "beta": 1.0},
                "forecaster": {"kind": "beta", "alpha": 1.0, "beta": 1.0},
                "test": {
                    "recovery_order": 16,
                    "quantile_count": 20,
                    "half_width": 0.07,
                    "mass_deficit": 0.05,
                    "widen_coeff": 1.0
                }
            }
        }"#,
    )
    .unwrap();
    let record = run_experiment(&config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass_rate = record.summary["pass_rate"].as_f64().unwrap();
    let ok = pass_rate >= 0.90 && elapsed <= 120.0;
    report(
        3,
        "informed pass",
        ok,
        &format!("pass rate {pass_rate:.3} over 500 seeds at N=10^4, {elapsed:.1} s"),
    );
    assert!(pass_rate >= 0.90, "pass rate {pass_rate} below 0.90");
    assert!(elapsed <= 120.0, "took {elapsed:.1} s > 120 s");
}

/// Criterion 4: the calibration test at N=8 (tolerance 0.15) accepts a
/// 5-point truth grid with measured epsilon, and the solved manipulation
/// game over a hull-spanning expert menu reaches 1 - eps - 0.01 with a
/// certified duality gap, on an exactly enumerated matrix, within 30 s.
#[test]
fn acceptance_4_prop1_reproduction() {
    let start = Instant::now();
    let grid = StrategyGrid::with_mixture_experts(&[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    let spec = TestSpec::new(
        8,
        TestKind::Calibration { bins: 5, tol: 0.15, min_count: 4 },
    )
    .unwrap();
    let rep = demonstrate_prop1(&spec, &grid, 0.5, &EvalMode::Exact).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let bound = 1.0 - rep.epsilon_measured - 0.01;
    let ok = rep.value >= bound && rep.duality_gap <= 1e-6 && elapsed <= 30.0;
    report(
        4,
        "finite-test manipulability",
        ok,
        &format!(
            "eps {:.4}, value {:.4} >= bound {:.4}, gap {:.1e}, {elapsed:.2} s",
            rep.epsilon_measured, rep.value, bound, rep.duality_gap
        ),
    );
    assert!(rep.value >= bound, "value {} below bound {bound}", rep.value);
    assert!(rep.duality_gap <= 1e-6, "gap {}", rep.duality_gap);
    assert!(rep.bound_satisfied);
    assert!(elapsed <= 30.0, "took {elapsed:.2} s > 30 s");
}

/// Criterion 5: the composed test's manipulation value over a 21-point
/// truth grid decays with the horizon — non-increasing over N in
/// {100, 1000, 10000} with a terminal value at most 0.5 while every
/// expert's acceptance region stays Lebesgue-small (length <= 0.2) —
/// with Monte Carlo matrices at 10^4 trials per entry and bootstrap
/// confidence intervals of half-width at most 0.03, within 10 minutes.
#[test]
fn acceptance_5_manipulation_decay() {
    let start = Instant::now();
    let params = ComposedParams::default();
    let points: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
    let truths: Vec<Prior> = points.iter().map(|&q| Prior::point(q).unwrap()).collect();
    let grid = StrategyGrid::new(truths.clone(), truths).unwrap();
    let horizons = [100, 1000, 10_000];
    let curve =
        manipulation_curve(&params, &grid, &horizons, 10_000, 424_242, 200).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let values: Vec<f64> = curve.iter().map(|p| p.value).collect();
    let non_increasing = values.windows(2).all(|w| w[1] <= w[0]);
    let terminal = curve.last().unwrap();
    let max_half_width = curve
        .iter()
        .map(|p| (p.ci_hi - p.ci_lo) / 2.0)
        .fold(0.0, f64::max);
    let ok = non_increasing
        && terminal.value <= 0.5
        && terminal.max_region_length <= 0.2
        && max_half_width <= 0.03
        && elapsed <= 600.0;
    report(
        5,
        "manipulation decay",
        ok,
        &format!(
            "values {:?}, terminal region length {:.3}, max CI half-width {:.3}, {elapsed:.1} s",
            values
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            terminal.max_region_length,
            max_half_width
        ),
    );
    assert!(non_increasing, "curve not non-increasing: {values:?}");
    assert!(terminal.value <= 0.5, "terminal value {}", terminal.value);
    assert!(
        terminal.max_region_length <= 0.2,
        "terminal region length {}",
        terminal.max_region_length
    );
    assert!(max_half_width <= 0.03, "CI half-width {max_half_width}");
    assert!(elapsed <= 600.0, "took {elapsed:.1} s > 600 s");
}

/// Criterion 6: the uniform-prior learner merges with a 0.7-coin — mean
/// absolute forecast gap at n=1000 at most 0.02 and strictly below the gap
/// at n=10 — over 200 sampled paths, within 30 s.
#[test]
fn acceptance_6_merging() {
    let start = Instant::now();
    let config = ExperimentConfig::from_json_str(
        r#"{
            "experiment": "merging",
            "master_seed": 60660,
            "replications": 1,
            "params": {
                "learner": {"kind": "beta", "alpha": 1.0, "beta": 1.0},
                "truth": {"kind": "point", "q": 0.7},
                "horizons": [10, 100, 1000],
                "trials": 200
            }
        }"#,
    )
    .unwrap();
    let record = run_experiment(&config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let gaps = record.replications[0].output["mean_abs_gap"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect::<Vec<_>>();
    let (at_10, at_1000) = (gaps[0], gaps[2]);
    let ok = at_1000 <= 0.02 && at_1000 < at_10 && elapsed <= 30.0;
    report(
        6,
        "merging",
        ok,
        &format!("mean gap {at_10:.4} at n=10 -> {at_1000:.4} at n=1000, {elapsed:.2} s"),
    );
    assert!(at_1000 <= 0.02, "gap at 1000 is {at_1000}");
    assert!(at_1000 < at_10, "no strict decay: {at_10} -> {at_1000}");
    assert!(elapsed <= 30.0, "took {elapsed:.2} s > 30 s");
}

/// Criterion 7: the two solver routes agree — fictitious play within 1e-4
/// of the LP on 100 random matrices up to 20x20, and the LP within 1e-10 of
/// the closed form on 2x2 games with distinct entries — within 30 s.
#[test]
fn acceptance_7_game_solver_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut worst_fp = 0.0_f64;
    for _ in 0..100 {
        let rows = 2 + rng.random_range(0..19);
        let cols = 2 + rng.random_range(0..19);
        let entries: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
            .collect();
        let matrix = GameMatrix::from_exact(entries).unwrap();
        let lp = solve_game(&matrix).unwrap();
        let fp = fictitious_play(&matrix, 1.8e-4, 300_000_000);
        worst_fp = worst_fp.max((fp.value - lp.value).abs());
    }

    // 2x2 closed form: saddle point if one exists, mixing formula otherwise.
    let closed_form = |a: [[f64; 2]; 2]| -> f64 {
        let maximin = a[0][0].min(a[0][1]).max(a[1][0].min(a[1][1]));
        let minimax = a[0][0].max(a[1][0]).min(a[0][1].max(a[1][1]));
        if (maximin - minimax).abs() < 1e-15 {
            maximin
        } else {
            (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / (a[0][0] + a[1][1] - a[0][1] - a[1][0])
        }
    };
    let mut worst_2x2 = 0.0_f64;
    let mut checked = 0;
    while checked < 1000 {
        let a: [[f64; 2]; 2] = [[rng.random(), rng.random()], [rng.random(), rng.random()]];
        let flat = [a[0][0], a[0][1], a[1][0], a[1][1]];
        let distinct = flat
            .iter()
            .all(|x| flat.iter().filter(|y| (*x - **y).abs() < 1e-9).count() == 1);
        if !distinct {
            continue;
        }
        checked += 1;
        let lp = solve_game(&GameMatrix::from_exact(vec![a[0].to_vec(), a[1].to_vec()]).unwrap())
            .unwrap();
        worst_2x2 = worst_2x2.max((lp.value - closed_form(a)).abs());
    }
    // The worked example: value (0.9*0.8 - 0.2*0.3)/(0.9+0.8-0.2-0.3) = 0.55.
    let example = solve_game(
        &GameMatrix::from_exact(vec![vec![0.9, 0.2], vec![0.3, 0.8]]).unwrap(),
    )
    .unwrap();
    worst_2x2 = worst_2x2.max((example.value - 0.55).abs());

    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_fp <= 1e-4 && worst_2x2 <= 1e-10 && elapsed <= 30.0;
    report(
        7,
        "game solver oracle",
        ok,
        &format!(
            "max |FP - LP| {worst_fp:.2e} over 100 matrices, max 2x2 closed-form error {worst_2x2:.2e}, {elapsed:.1} s"
        ),
    );
    assert!(worst_fp <= 1e-4, "FP vs LP deviation {worst_fp}");
    assert!(worst_2x2 <= 1e-10, "closed-form deviation {worst_2x2}");
    assert!(elapsed <= 30.0, "took {elapsed:.1} s > 30 s");
}

/// Criterion 8: every moment vector recovered from a genuine prior's trace
/// passes the complete-monotonicity check at tolerance 1e-9, and the
/// crafted alternating-forecast counterexample fails it, within 5 s.
#[test]
fn acceptance_8_hausdorff_validity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(888);
    let mut passes = 0;
    let total = 100;
    for i in 0..total {
        let prior = match i % 3 {
            0 => Prior::point(rng.random::<f64>()).unwrap(),
            1 => Prior::beta(0.5 + 4.0 * rng.random::<f64>(), 0.5 + 4.0 * rng.random::<f64>())
                .unwrap(),
            _ => {
                let a = rng.random::<f64>() * 0.5;
                let b = 0.5 + rng.random::<f64>() * 0.5;
                let w = 0.1 + 0.8 * rng.random::<f64>();
                Prior::Grid(GridPrior::new_normalized(vec![a, b], vec![w, 1.0 - w]).unwrap())
            }
        };
        let path = sample_realization(&prior, 20, derive_seed(999, i as u64));
        let trace = ForecastTrace::generate(&prior, &path).unwrap();
        let m = recover_moments(&trace, 14, 1e-9).unwrap();
        if hausdorff_check(&m, 1e-9) {
            passes += 1;
        }
    }

    let alternating: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.9 } else { 0.1 }).collect();
    let counterexample =
        ForecastTrace::new(alternating, "1".repeat(16).parse().unwrap()).unwrap();
    let m = recover_moments(&counterexample, 16, 1e-9).unwrap();
    let counterexample_fails = !hausdorff_check(&m, 1e-9);

    let elapsed = start.elapsed().as_secs_f64();
    let ok = passes == total && counterexample_fails && elapsed <= 5.0;
    report(
        8,
        "moment validity",
        ok,
        &format!(
            "{passes}/{total} genuine traces valid, counterexample rejected: {counterexample_fails}, {elapsed:.2} s"
        ),
    );
    assert_eq!(passes, total, "a genuine trace failed the validity check");
    assert!(counterexample_fails, "counterexample slipped through");
    assert!(elapsed <= 5.0, "took {elapsed:.2} s > 5 s");
}
