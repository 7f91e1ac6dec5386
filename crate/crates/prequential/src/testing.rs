//! Prequential tests over truncated forecast traces.
//!
//! Every verdict here is a function of the trace alone — the forecasts made
//! along the realized path plus the outcomes — never of forecasts after
//! histories that did not occur. The composed test chains the recovery
//! pipeline into a one-shot test of the recovered prior against the
//! empirical mean; the rest are finite baselines (frequency matching,
//! calibration, log-score) that the manipulation module uses as foils.
//!
//! A note on smallness: the one-shot acceptance region is kept small in
//! Lebesgue measure on the parameter space, standing in for the topological
//! smallness of the ideal construction. The region covers at least `1-delta`
//! of the declared prior's mass whenever the quantile count is at least
//! `1/delta`, while its total length stays bounded by
//! `2*eps*(quantiles + large atoms)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::{hausdorff_check, recover_moments, reconstruct_prior};
use crate::theory::{empirical_mean, ForecastTrace, GridPrior};

/// PASS or FAIL.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        matches!(self, Verdict::Pass)
    }

    fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

// ---------------------------------------------------------------------------
// Acceptance regions
// ---------------------------------------------------------------------------

/// A finite union of disjoint closed subintervals of [0,1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRegion {
    intervals: Vec<(f64, f64)>,
}

impl AcceptanceRegion {
    /// Builds a normalized region from interval centers and a common
    /// half-width: clip to [0,1], sort, and merge overlaps.
    pub fn from_centers(centers: &[f64], half_width: f64) -> Self {
        let mut raw: Vec<(f64, f64)> = centers
            .iter()
            .map(|&c| ((c - half_width).max(0.0), (c + half_width).min(1.0)))
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in raw {
            match intervals.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => intervals.push((lo, hi)),
            }
        }
        AcceptanceRegion { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Lebesgue measure of the union.
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn contains(&self, q: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| q >= lo && q <= hi)
    }
}

/// Covers the declared prior with `m` quantile intervals plus one interval
/// per atom of mass at least `delta / m`. The quantile points sit at levels
/// `i/(m+1)` under the left-continuous generalized inverse, so ties and
/// straddling atoms are safe: with `m >= ceil(1/delta)` the region carries
/// at least `1 - delta` of the prior's mass.
pub fn build_acceptance_region(
    mu_bar: &GridPrior,
    m: usize,
    eps: f64,
    delta: f64,
) -> Result<AcceptanceRegion> {
    if m < 1 {
        return Err(Error::InvalidParams("quantile count must be at least 1".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParams(format!(
            "interval half-width must be positive, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!(
            "mass deficit must lie in (0,1), got {delta}"
        )));
    }
    let mut centers = Vec::with_capacity(m);
    for i in 1..=m {
        centers.push(mu_bar.quantile(i as f64 / (m as f64 + 1.0)));
    }
    let atom_floor = delta / m as f64;
    for (q, w) in mu_bar.atoms() {
        if w >= atom_floor {
            centers.push(q);
        }
    }
    Ok(AcceptanceRegion::from_centers(&centers, eps))
}

/// One-shot test of a declared parameter distribution against an observed
/// parameter estimate: PASS iff the estimate falls in the acceptance region
/// built from the declared distribution.
pub fn one_shot_test(
    mu_bar: &GridPrior,
    q_hat: f64,
    m: usize,
    eps: f64,
    delta: f64,
) -> Result<Verdict> {
    let region = build_acceptance_region(mu_bar, m, eps, delta)?;
    Ok(Verdict::from_bool(region.contains(q_hat)))
}

// ---------------------------------------------------------------------------
// The composed test
// ---------------------------------------------------------------------------

/// Parameters of the composed test. Defaults are the laboratory's standard
/// operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComposedParams {
    /// Moment recovery order (float lane ceiling is ~16).
    pub recovery_order: usize,
    /// Consistency tolerance of the triangular solve.
    pub recovery_tol: f64,
    /// Complete-monotonicity tolerance.
    pub hausdorff_tol: f64,
    /// Uniform reconstruction grid size.
    pub grid_size: usize,
    /// Feasibility threshold on the squared moment mismatch.
    pub feasibility_threshold: f64,
    /// Number of quantile intervals in the acceptance region.
    pub quantile_count: usize,
    /// Base half-width of each acceptance interval.
    pub half_width: f64,
    /// Mass the region may miss (delta); quantile_count >= 1/delta keeps the
    /// informed-pass guarantee.
    pub mass_deficit: f64,
    /// Coefficient of the finite-horizon widening
    /// `sqrt(ln(1/delta) / (2N))` that absorbs empirical-mean noise.
    pub widen_coeff: f64,
}

impl Default for ComposedParams {
    fn default() -> Self {
        ComposedParams {
            recovery_order: crate::recovery::DEFAULT_RECOVERY_ORDER,
            recovery_tol: crate::recovery::QUADRATURE_SOURCE_TOL,
            hausdorff_tol: 1e-9,
            grid_size: 101,
            feasibility_threshold: 1e-6,
            quantile_count: 20,
            half_width: 0.07,
            mass_deficit: 0.05,
            widen_coeff: 1.0,
        }
    }
}

impl ComposedParams {
    pub fn validate(&self) -> Result<()> {
        if self.recovery_order == 0 {
            return Err(Error::InvalidParams("recovery order must be positive".into()));
        }
        if !(self.recovery_tol > 0.0) || !(self.hausdorff_tol >= 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidParams("grid size must be at least 2".into()));
        }
        if self.quantile_count < 1 {
            return Err(Error::InvalidParams("quantile count must be at least 1".into()));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::InvalidParams("half-width must be positive".into()));
        }
        if !(self.mass_deficit > 0.0 && self.mass_deficit < 1.0) {
            return Err(Error::InvalidParams("mass deficit must lie in (0,1)".into()));
        }
        if !(self.widen_coeff >= 0.0) {
            return Err(Error::InvalidParams(
                "widening coefficient must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Effective half-width at horizon `n`: the base width plus a Hoeffding
    /// allowance for the gap between the truncated empirical mean and the
    /// limit average it stands in for.
    pub fn effective_half_width(&self, horizon: usize) -> f64 {
        if horizon == 0 {
            return self.half_width;
        }
        self.half_width
            + self.widen_coeff * ((1.0 / self.mass_deficit).ln() / (2.0 * horizon as f64)).sqrt()
    }
}

/// Step-by-step record of a composed-test evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComposedDiagnostics {
    pub verdict: Verdict,
    /// Which stage failed, when the verdict is FAIL before the one-shot
    /// stage: "recovery", "hausdorff", or "reconstruction".
    pub failed_stage: Option<String>,
    pub moment_mismatch: Option<f64>,
    pub region_length: Option<f64>,
    pub q_hat: Option<f64>,
}

/// The composed test: recover the forecaster's moments from the trace, check
/// they are genuine (complete monotonicity), reconstruct the prior on a
/// grid, and run the one-shot test of that prior against the empirical mean.
/// Any recovery failure is a FAIL verdict, never an error.
pub fn composed_test_t(trace: &ForecastTrace, params: &ComposedParams) -> Verdict {
    composed_test_t_diagnostics(trace, params).verdict
}

/// [`composed_test_t`] with the intermediate quantities exposed.
pub fn composed_test_t_diagnostics(
    trace: &ForecastTrace,
    params: &ComposedParams,
) -> ComposedDiagnostics {
    let fail = |stage: &str| ComposedDiagnostics {
        verdict: Verdict::Fail,
        failed_stage: Some(stage.to_string()),
        moment_mismatch: None,
        region_length: None,
        q_hat: None,
    };
    if trace.horizon() == 0 {
        return fail("recovery");
    }
    let order = params.recovery_order.min(trace.horizon());
    let moments = match recover_moments(trace, order, params.recovery_tol) {
        Ok(m) => m,
        Err(_) => return fail("recovery"),
    };
    if !hausdorff_check(&moments, params.hausdorff_tol) {
        return fail("hausdorff");
    }
    let reconstruction =
        match reconstruct_prior(&moments, params.grid_size, params.feasibility_threshold) {
            Ok(r) => r,
            Err(_) => return fail("reconstruction"),
        };
    let q_hat = empirical_mean(trace.outcomes()).expect("horizon checked above");
    let eps = params.effective_half_width(trace.horizon());
    let region = build_acceptance_region(
        &reconstruction.prior,
        params.quantile_count,
        eps,
        params.mass_deficit,
    )
    .expect("validated parameters");
    ComposedDiagnostics {
        verdict: Verdict::from_bool(region.contains(q_hat)),
        failed_stage: None,
        moment_mismatch: Some(reconstruction.moment_mismatch),
        region_length: Some(region.total_length()),
        q_hat: Some(q_hat),
    }
}

// ---------------------------------------------------------------------------
// Baseline finite tests
// ---------------------------------------------------------------------------

/// PASS iff all forecasts are exactly equal and the common value is within
/// `tol` of the empirical frequency of ones.
pub fn iid_frequency_test(trace: &ForecastTrace, tol: f64) -> Verdict {
    let forecasts = trace.forecasts();
    let Some(&first) = forecasts.first() else {
        return Verdict::Pass; // no periods, nothing to contradict
    };
    if forecasts.iter().any(|&p| p != first) {
        return Verdict::Fail;
    }
    let mean = empirical_mean(trace.outcomes()).expect("non-empty");
    Verdict::from_bool((first - mean).abs() <= tol)
}

/// PASS iff from `burn_in` on, every forecast is within `tol` of the
/// (full-trace) empirical mean. Vacuously PASS when no periods remain after
/// the burn-in.
pub fn eventual_frequency_test(trace: &ForecastTrace, tol: f64, burn_in: usize) -> Verdict {
    if trace.horizon() == 0 || burn_in >= trace.horizon() {
        return Verdict::Pass;
    }
    let mean = empirical_mean(trace.outcomes()).expect("non-empty");
    Verdict::from_bool(
        trace.forecasts()[burn_in..]
            .iter()
            .all(|&p| (p - mean).abs() <= tol),
    )
}

/// Bins periods by forecast value; PASS iff in every bin holding at least
/// `min_count` periods, the average outcome is within `tol` of the average
/// forecast. Bins with fewer observations are vacuous.
pub fn calibration_test(trace: &ForecastTrace, bins: usize, tol: f64, min_count: usize) -> Verdict {
    if bins == 0 {
        return Verdict::Pass;
    }
    let mut count = vec![0usize; bins];
    let mut forecast_sum = vec![0.0; bins];
    let mut outcome_sum = vec![0.0; bins];
    for (&p, s) in trace.forecasts().iter().zip(trace.outcomes().iter()) {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        forecast_sum[b] += p;
        outcome_sum[b] += f64::from(s.bit());
    }
    for b in 0..bins {
        if count[b] >= min_count.max(1) {
            let gap = (outcome_sum[b] - forecast_sum[b]).abs() / count[b] as f64;
            if gap > tol {
                return Verdict::Fail;
            }
        }
    }
    Verdict::Pass
}

/// PASS iff the average log-score `ln p_n[s_n]` is at least `min_avg_log`.
/// A certain forecast on the wrong outcome scores negative infinity.
pub fn likelihood_test(trace: &ForecastTrace, min_avg_log: f64) -> Verdict {
    if trace.horizon() == 0 {
        return Verdict::Pass;
    }
    let mut total = 0.0;
    for (&p, s) in trace.forecasts().iter().zip(trace.outcomes().iter()) {
        let prob = if s.is_one() { p } else { 1.0 - p };
        total += if prob > 0.0 { prob.ln() } else { f64::NEG_INFINITY };
    }
    Verdict::from_bool(total / trace.horizon() as f64 >= min_avg_log)
}

// ---------------------------------------------------------------------------
// Test specifications
// ---------------------------------------------------------------------------

/// The decision rule, without the truncation horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    ComposedT(ComposedParams),
    Calibration { bins: usize, tol: f64, min_count: usize },
    IidFrequency { tol: f64 },
    EventualFrequency { tol: f64, burn_in: usize },
    Likelihood { min_avg_log: f64 },
}

/// A decision rule plus the truncation horizon it reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    pub horizon: usize,
    pub test: TestKind,
}

impl TestSpec {
    pub fn new(horizon: usize, test: TestKind) -> Result<Self> {
        let spec = TestSpec { horizon, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParams("test horizon must be at least 1".into()));
        }
        match &self.test {
            TestKind::ComposedT(p) => {
                p.validate()?;
                if self.horizon < p.recovery_order {
                    return Err(Error::InvalidParams(format!(
                        "composed test horizon {} is below the recovery order {}",
                        self.horizon, p.recovery_order
                    )));
                }
            }
            TestKind::Calibration { bins, tol, .. } => {
                if *bins == 0 {
                    return Err(Error::InvalidParams("calibration needs at least one bin".into()));
                }
                if !(*tol > 0.0) {
                    return Err(Error::InvalidParams(
                        "calibration tolerance must be positive".into(),
                    ));
                }
            }
            TestKind::IidFrequency { tol } => {
                if !(*tol > 0.0) {
                    return Err(Error::InvalidParams(
                        "frequency tolerance must be positive".into(),
                    ));
                }
            }
            TestKind::EventualFrequency { tol, burn_in } => {
                if !(*tol > 0.0) {
                    return Err(Error::InvalidParams(
                        "frequency tolerance must be positive".into(),
                    ));
                }
                if *burn_in >= self.horizon {
                    return Err(Error::InvalidParams(format!(
                        "burn-in {} must be below the horizon {}",
                        burn_in, self.horizon
                    )));
                }
            }
            TestKind::Likelihood { min_avg_log } => {
                if !min_avg_log.is_finite() {
                    return Err(Error::InvalidParams("log-score threshold must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether this is one of the finite baseline tests rather than the
    /// composed test under study.
    pub fn is_baseline(&self) -> bool {
        !matches!(self.test, TestKind::ComposedT(_))
    }

    /// Evaluates the verdict on the first `horizon` periods of the trace.
    /// Total: traces shorter than the horizon are evaluated as-is.
    pub fn evaluate(&self, trace: &ForecastTrace) -> Verdict {
        let truncated;
        let view = if trace.horizon() > self.horizon {
            truncated = trace.truncated(self.horizon);
            &truncated
        } else {
            trace
        };
        match &self.test {
            TestKind::ComposedT(p) => composed_test_t(view, p),
            TestKind::Calibration { bins, tol, min_count } => {
                calibration_test(view, *bins, *tol, *min_count)
            }
            TestKind::IidFrequency { tol } => iid_frequency_test(view, *tol),
            TestKind::EventualFrequency { tol, burn_in } => {
                eventual_frequency_test(view, *tol, *burn_in)
            }
            TestKind::Likelihood { min_avg_log } => likelihood_test(view, *min_avg_log),
        }
    }
}
