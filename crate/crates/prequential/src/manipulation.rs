//! The manipulation game between a strategic expert and Nature.
//!
//! The expert picks a theory (possibly at random), Nature picks the truth,
//! and the payoff is the probability that the expert's forecasts pass the
//! test on a path drawn from the truth. With both sides restricted to finite
//! menus of exchangeable priors the payoff matrix is computable — exactly by
//! path enumeration at short horizons, by Monte Carlo otherwise — and the
//! zero-sum game is solved by linear programming with fictitious play as an
//! independent cross-check.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::solve_matrix_game;
use crate::testing::{
    build_acceptance_region, AcceptanceRegion, ComposedParams, TestKind, TestSpec,
};
use crate::theory::{derive_seed, ForecastTrace, GridPrior, Outcome, PartialRealization, Prior};
use crate::recovery::{hausdorff_check, reconstruct_prior, MomentVector};

/// Exact enumeration walks all `2^horizon` paths; cap the exponent.
pub const EXACT_HORIZON_CAP: usize = 20;

// ---------------------------------------------------------------------------
// Strategy grids and matrices
// ---------------------------------------------------------------------------

/// Finite strategy menus: the expert's pure strategies (full exchangeable
/// theories) and Nature's truth grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyGrid {
    pub expert_theories: Vec<Prior>,
    pub truth_grid: Vec<Prior>,
}

impl StrategyGrid {
    pub fn new(expert_theories: Vec<Prior>, truth_grid: Vec<Prior>) -> Result<Self> {
        if expert_theories.is_empty() || truth_grid.is_empty() {
            return Err(Error::InvalidInput(
                "strategy grid needs at least one expert theory and one truth".into(),
            ));
        }
        Ok(StrategyGrid {
            expert_theories,
            truth_grid,
        })
    }

    /// Point masses at `count` evenly spaced biases `0, 1/(count-1), ..., 1`.
    pub fn point_masses(count: usize) -> Result<Vec<Prior>> {
        if count < 2 {
            return Err(Error::InvalidInput("need at least two grid points".into()));
        }
        (0..count)
            .map(|i| Prior::point(i as f64 / (count - 1) as f64))
            .collect()
    }

    /// Expert menu spanning the convex hull of point-mass truths: the points
    /// themselves, pairwise mixtures at weights 1/4, 1/2, 3/4, and uniform
    /// mixtures over every subset of three or more. Nature's mixed
    /// strategies correspond to mixture theories, so an expert menu must
    /// reach into the hull for the manipulability bound to bind.
    pub fn with_mixture_experts(truth_points: &[f64]) -> Result<StrategyGrid> {
        let n = truth_points.len();
        if n < 2 || n > 16 {
            return Err(Error::InvalidInput(
                "mixture menu wants 2..=16 truth points".into(),
            ));
        }
        let truths: Vec<Prior> = truth_points
            .iter()
            .map(|&q| Prior::point(q))
            .collect::<Result<_>>()?;
        let mut experts = truths.clone();
        for i in 0..n {
            for j in i + 1..n {
                for w in [0.25, 0.5, 0.75] {
                    experts.push(Prior::Grid(GridPrior::new_normalized(
                        vec![truth_points[i], truth_points[j]],
                        vec![w, 1.0 - w],
                    )?));
                }
            }
        }
        for mask in 1u32..(1 << n) {
            if mask.count_ones() >= 3 {
                let subset: Vec<f64> = (0..n)
                    .filter(|k| mask >> k & 1 == 1)
                    .map(|k| truth_points[k])
                    .collect();
                let w = vec![1.0 / subset.len() as f64; subset.len()];
                experts.push(Prior::Grid(GridPrior::new_normalized(subset, w)?));
            }
        }
        StrategyGrid::new(experts, truths)
    }
}

/// How pass probabilities are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    /// Exhaustive path enumeration; exact up to float rounding.
    Exact,
    /// Sampled truth paths with per-trial derived seeds.
    MonteCarlo { trials: u64, seed: u64 },
}

/// Provenance of a game matrix's entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixProvenance {
    Exact,
    MonteCarlo { trials: u64 },
}

/// Pass probabilities indexed by (expert theory, truth), with per-entry
/// standard errors when estimated by Monte Carlo.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameMatrix {
    pass_prob: Vec<Vec<f64>>,
    std_err: Vec<Vec<f64>>,
    provenance: MatrixProvenance,
}

impl GameMatrix {
    pub fn new(
        pass_prob: Vec<Vec<f64>>,
        std_err: Vec<Vec<f64>>,
        provenance: MatrixProvenance,
    ) -> Result<Self> {
        if pass_prob.is_empty() || pass_prob[0].is_empty() {
            return Err(Error::InvalidInput("game matrix must be non-empty".into()));
        }
        let cols = pass_prob[0].len();
        if pass_prob.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("game matrix is ragged".into()));
        }
        if pass_prob
            .iter()
            .flat_map(|r| r.iter())
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::InvalidInput("pass probability outside [0,1]".into()));
        }
        if std_err.len() != pass_prob.len() || std_err.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("standard errors shaped unlike the matrix".into()));
        }
        Ok(GameMatrix {
            pass_prob,
            std_err,
            provenance,
        })
    }

    pub fn from_exact(pass_prob: Vec<Vec<f64>>) -> Result<Self> {
        let std_err = pass_prob.iter().map(|r| vec![0.0; r.len()]).collect();
        GameMatrix::new(pass_prob, std_err, MatrixProvenance::Exact)
    }

    pub fn rows(&self) -> usize {
        self.pass_prob.len()
    }

    pub fn cols(&self) -> usize {
        self.pass_prob[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pass_prob[i][j]
    }

    pub fn std_err(&self, i: usize, j: usize) -> f64 {
        self.std_err[i][j]
    }

    pub fn provenance(&self) -> MatrixProvenance {
        self.provenance
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.pass_prob
    }
}

/// A randomization over the expert's pure strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy {
    weights: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("mixed strategy must not be empty".into()));
        }
        if weights.iter().any(|&w| w < -1e-12 || !w.is_finite()) {
            return Err(Error::InvalidInput("mixed strategy weight negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "mixed strategy weights sum to {sum}"
            )));
        }
        Ok(MixedStrategy {
            weights: weights.iter().map(|w| w.max(0.0)).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        MixedStrategy::new(v)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(s: MixedStrategy) -> Self {
        s.weights
    }
}

// ---------------------------------------------------------------------------
// Pass probabilities
// ---------------------------------------------------------------------------

/// Probability that `expert`'s forecasts pass `spec` on a path drawn from
/// `truth`. Paths on which the expert assigns some realized prefix zero
/// probability count as FAIL.
pub fn pass_probability(
    expert: &Prior,
    truth: &Prior,
    spec: &TestSpec,
    mode: &EvalMode,
) -> Result<f64> {
    pass_probability_with_se(expert, truth, spec, mode).map(|(p, _)| p)
}

/// [`pass_probability`] plus the Monte Carlo standard error (zero in exact
/// mode).
pub fn pass_probability_with_se(
    expert: &Prior,
    truth: &Prior,
    spec: &TestSpec,
    mode: &EvalMode,
) -> Result<(f64, f64)> {
    spec.validate()?;
    match mode {
        EvalMode::Exact => Ok((pass_probability_exact(expert, truth, spec)?, 0.0)),
        EvalMode::MonteCarlo { trials, seed } => {
            if *trials == 0 {
                return Err(Error::InvalidParams("Monte Carlo needs at least one trial".into()));
            }
            match &spec.test {
                TestKind::ComposedT(params) => {
                    let evaluator = ComposedEvaluator::prepare(expert, params, spec.horizon);
                    Ok(evaluator.pass_probability(truth, spec.horizon, *trials, *seed))
                }
                _ => Ok(pass_probability_generic_mc(expert, truth, spec, *trials, *seed)),
            }
        }
    }
}

fn pass_probability_exact(expert: &Prior, truth: &Prior, spec: &TestSpec) -> Result<f64> {
    let n = spec.horizon;
    if n > EXACT_HORIZON_CAP {
        return Err(Error::HorizonTooLarge {
            horizon: n,
            cap: EXACT_HORIZON_CAP,
        });
    }
    let mut total = 0.0;
    for mask in 0u64..(1u64 << n) {
        let ones = mask.count_ones() as u64;
        let prob = truth.path_probability_counts(ones, n as u64);
        if prob == 0.0 {
            continue;
        }
        let path = PartialRealization::from_outcomes(
            (0..n)
                .map(|k| Outcome::from((mask >> k) & 1 == 1))
                .collect(),
        );
        let Ok(trace) = ForecastTrace::generate(expert, &path) else {
            continue; // zero-mass prefix: FAIL on this path
        };
        if spec.evaluate(&trace).is_pass() {
            total += prob;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

fn pass_probability_generic_mc(
    expert: &Prior,
    truth: &Prior,
    spec: &TestSpec,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    let passes: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let path =
                crate::theory::sample_realization(truth, spec.horizon, derive_seed(seed, t));
            match ForecastTrace::generate(expert, &path) {
                Ok(trace) => u64::from(spec.evaluate(&trace).is_pass()),
                Err(_) => 0,
            }
        })
        .sum();
    let p = passes as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Monte Carlo evaluator for the composed test against one expert theory.
///
/// Moment recovery from any positive-probability trace of an exchangeable
/// forecaster returns the forecaster's own moments (path independence is
/// asserted by the recovery tests), so the reconstruction and its acceptance
/// region are functions of the expert prior alone and can be built once.
/// Each trial then draws a bias from the truth, a binomial count of ones for
/// the path, and checks (a) that the expert supports such a path at all and
/// (b) that the empirical mean lands in the region.
pub struct ComposedEvaluator {
    expert: Prior,
    region: Option<AcceptanceRegion>,
}

impl ComposedEvaluator {
    pub fn prepare(expert: &Prior, params: &ComposedParams, horizon: usize) -> Self {
        let order = params.recovery_order.min(horizon);
        let moments = expert.moments(order);
        let region = MomentVector::new(moments)
            .ok()
            .filter(|m| hausdorff_check(m, params.hausdorff_tol))
            .and_then(|m| {
                reconstruct_prior(&m, params.grid_size, params.feasibility_threshold).ok()
            })
            .and_then(|rec| {
                build_acceptance_region(
                    &rec.prior,
                    params.quantile_count,
                    params.effective_half_width(horizon),
                    params.mass_deficit,
                )
                .ok()
            });
        ComposedEvaluator {
            expert: expert.clone(),
            region,
        }
    }

    /// Lebesgue measure of this expert's acceptance region in parameter
    /// space (zero if the expert already fails the recovery stages).
    pub fn region_length(&self) -> f64 {
        self.region.as_ref().map_or(0.0, |r| r.total_length())
    }

    pub fn pass_probability(&self, truth: &Prior, horizon: usize, trials: u64, seed: u64) -> (f64, f64) {
        let Some(region) = &self.region else {
            return (0.0, 0.0);
        };
        let n = horizon as u64;
        let passes: u64 = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t));
                let q = truth.sample_parameter(&mut rng);
                let ones = sample_binomial(&mut rng, n, q);
                let supported = self.expert.supports_counts(ones, n);
                let q_hat = ones as f64 / n as f64;
                u64::from(supported && region.contains(q_hat))
            })
            .sum();
        let p = passes as f64 / trials as f64;
        (p, (p * (1.0 - p) / trials as f64).sqrt())
    }
}

fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, q: f64) -> u64 {
    if q <= 0.0 {
        return 0;
    }
    if q >= 1.0 {
        return n;
    }
    rand_distr::Binomial::new(n, q)
        .expect("validated bias")
        .sample(rng)
}

// ---------------------------------------------------------------------------
// Game building and solving
// ---------------------------------------------------------------------------

/// Fills the pass-probability matrix entry by entry. Entries get
/// deterministic derived seeds, so the result is independent of thread
/// scheduling.
pub fn build_game(grid: &StrategyGrid, spec: &TestSpec, mode: &EvalMode) -> Result<GameMatrix> {
    spec.validate()?;
    let rows = grid.expert_theories.len();
    let cols = grid.truth_grid.len();
    let mut pass = vec![vec![0.0; cols]; rows];
    let mut se = vec![vec![0.0; cols]; rows];
    for (i, expert) in grid.expert_theories.iter().enumerate() {
        // For the composed test the per-expert recovery pipeline is hoisted
        // out of the entry loop.
        let evaluator = match (&spec.test, mode) {
            (TestKind::ComposedT(params), EvalMode::MonteCarlo { .. }) => {
                Some(ComposedEvaluator::prepare(expert, params, spec.horizon))
            }
            _ => None,
        };
        for (j, truth) in grid.truth_grid.iter().enumerate() {
            let (p, s) = match (mode, &evaluator) {
                (EvalMode::MonteCarlo { trials, seed }, Some(ev)) => {
                    let entry_seed = derive_seed(*seed, (i * cols + j) as u64);
                    ev.pass_probability(truth, spec.horizon, *trials, entry_seed)
                }
                (EvalMode::MonteCarlo { trials, seed }, None) => {
                    let entry_seed = derive_seed(*seed, (i * cols + j) as u64);
                    pass_probability_with_se(
                        expert,
                        truth,
                        spec,
                        &EvalMode::MonteCarlo {
                            trials: *trials,
                            seed: entry_seed,
                        },
                    )?
                }
                (EvalMode::Exact, _) => pass_probability_with_se(expert, truth, spec, mode)?,
            };
            pass[i][j] = p;
            se[i][j] = s;
        }
    }
    let provenance = match mode {
        EvalMode::Exact => MatrixProvenance::Exact,
        EvalMode::MonteCarlo { trials, .. } => MatrixProvenance::MonteCarlo { trials: *trials },
    };
    GameMatrix::new(pass, se, provenance)
}

/// Solved game: the expert's minimax mixture, Nature's dual mixture, the
/// value, and the duality certificate recomputed from the strategies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameSolution {
    pub strategy: MixedStrategy,
    pub dual_strategy: MixedStrategy,
    /// Guaranteed value: `min_j strategy^T A e_j`.
    pub value: f64,
    /// `max_i (A dual)_i - min_j (strategy^T A)_j`; the true value lies
    /// within `gap` of the reported one.
    pub duality_gap: f64,
}

/// Solves the matrix game by LP and certifies the solution by recomputing
/// both players' guarantees; the duality gap must close to 1e-6.
pub fn solve_game(matrix: &GameMatrix) -> Result<GameSolution> {
    let lp = solve_matrix_game(matrix.entries());
    let (v_low, v_up) = certificate(matrix, &lp.row_strategy, &lp.col_strategy);
    let gap = v_up - v_low;
    if !(gap.abs() <= 1e-6) {
        return Err(Error::PreconditionFailed(format!(
            "duality gap {gap} failed to certify"
        )));
    }
    Ok(GameSolution {
        strategy: MixedStrategy::new(lp.row_strategy)?,
        dual_strategy: MixedStrategy::new(lp.col_strategy)?,
        value: v_low,
        duality_gap: gap.max(0.0),
    })
}

fn certificate(matrix: &GameMatrix, row: &[f64], col: &[f64]) -> (f64, f64) {
    let v_low = (0..matrix.cols())
        .map(|j| (0..matrix.rows()).map(|i| row[i] * matrix.get(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let v_up = (0..matrix.rows())
        .map(|i| (0..matrix.cols()).map(|j| matrix.get(i, j) * col[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    (v_low, v_up)
}

/// Fictitious-play solution with its value bracket.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FictitiousPlaySolution {
    pub strategy: MixedStrategy,
    pub dual_strategy: MixedStrategy,
    /// Midpoint of the final bracket.
    pub value: f64,
    pub value_lower: f64,
    pub value_upper: f64,
    pub iterations: u64,
}

/// Classic simultaneous fictitious play: both players best-respond to the
/// opponent's empirical mixture. Stops when the value bracket closes to
/// `tol` or after `max_iterations` rounds; the bracket endpoints are valid
/// bounds either way.
pub fn fictitious_play(matrix: &GameMatrix, tol: f64, max_iterations: u64) -> FictitiousPlaySolution {
    let rows = matrix.rows();
    let cols = matrix.cols();
    let mut row_counts = vec![0u64; rows];
    let mut col_counts = vec![0u64; cols];
    // Cumulative payoff of each pure strategy against the opponent's plays.
    let mut row_cum = vec![0.0; rows];
    let mut col_cum = vec![0.0; cols];

    let mut best_lower = f64::NEG_INFINITY;
    let mut best_upper = f64::INFINITY;
    let mut iterations = 0u64;

    for t in 1..=max_iterations {
        let i = argmax(&row_cum);
        let j = argmin(&col_cum);
        row_counts[i] += 1;
        col_counts[j] += 1;
        for (r, cum) in row_cum.iter_mut().enumerate() {
            *cum += matrix.get(r, j);
        }
        for (c, cum) in col_cum.iter_mut().enumerate() {
            *cum += matrix.get(i, c);
        }
        iterations = t;
        let upper = row_cum.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t as f64;
        let lower = col_cum.iter().copied().fold(f64::INFINITY, f64::min) / t as f64;
        best_lower = best_lower.max(lower);
        best_upper = best_upper.min(upper);
        if best_upper - best_lower <= tol {
            break;
        }
    }

    let total = iterations as f64;
    let strategy = MixedStrategy::new(row_counts.iter().map(|&c| c as f64 / total).collect())
        .expect("counts sum to the iteration count");
    let dual_strategy = MixedStrategy::new(col_counts.iter().map(|&c| c as f64 / total).collect())
        .expect("counts sum to the iteration count");
    FictitiousPlaySolution {
        strategy,
        dual_strategy,
        value: 0.5 * (best_lower + best_upper),
        value_lower: best_lower,
        value_upper: best_upper,
        iterations,
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Demonstrations
// ---------------------------------------------------------------------------

/// Numerical content of the finite-test manipulability result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prop1Report {
    /// `1 - min_j diag_j`: the measured rejection rate of the test on the
    /// truths themselves.
    pub epsilon_measured: f64,
    /// Solved game value.
    pub value: f64,
    /// The manipulating mixture.
    pub zeta: MixedStrategy,
    /// Truth against which the mixture fares worst.
    pub worst_truth_index: usize,
    pub duality_gap: f64,
    /// Whether `value >= 1 - epsilon_measured - 0.01` held.
    pub bound_satisfied: bool,
}

/// Demonstrates finite-test manipulability: verifies the test accepts every
/// truth in the grid with probability at least `1 - epsilon` (the diagonal
/// precondition), solves the manipulation game, and reports whether the
/// value reaches `1 - epsilon_measured - 0.01`.
pub fn demonstrate_prop1(
    spec: &TestSpec,
    grid: &StrategyGrid,
    epsilon: f64,
    mode: &EvalMode,
) -> Result<Prop1Report> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidParams(format!(
            "epsilon must lie in [0,1), got {epsilon}"
        )));
    }
    // Acceptance precondition, measured on the diagonal.
    let mut min_diag = f64::INFINITY;
    for truth in &grid.truth_grid {
        let p = pass_probability(truth, truth, spec, mode)?;
        min_diag = min_diag.min(p);
    }
    let epsilon_measured = 1.0 - min_diag;
    if epsilon_measured > epsilon {
        return Err(Error::PreconditionFailed(format!(
            "test rejects some truth with probability {epsilon_measured:.4} > epsilon {epsilon}"
        )));
    }

    let matrix = build_game(grid, spec, mode)?;
    let solution = solve_game(&matrix)?;
    let zeta = solution.strategy.clone();
    let worst_truth_index = (0..matrix.cols())
        .min_by(|&a, &b| {
            let va: f64 = (0..matrix.rows()).map(|i| zeta.weights()[i] * matrix.get(i, a)).sum();
            let vb: f64 = (0..matrix.rows()).map(|i| zeta.weights()[i] * matrix.get(i, b)).sum();
            va.total_cmp(&vb)
        })
        .expect("non-empty truth grid");
    let bound_satisfied = solution.value >= 1.0 - epsilon_measured - 0.01;
    Ok(Prop1Report {
        epsilon_measured,
        value: solution.value,
        zeta,
        worst_truth_index,
        duality_gap: solution.duality_gap,
        bound_satisfied,
    })
}

/// One solved horizon of the manipulation curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub horizon: usize,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Largest acceptance-region length among the expert theories at this
    /// horizon.
    pub max_region_length: f64,
}

/// Solves the composed-test manipulation game across horizons. Values carry
/// bootstrap confidence intervals: each resample redraws every matrix entry
/// from its binomial sampling distribution and re-solves the game.
pub fn manipulation_curve(
    params: &ComposedParams,
    grid: &StrategyGrid,
    horizons: &[usize],
    trials: u64,
    seed: u64,
    bootstrap: usize,
) -> Result<Vec<CurvePoint>> {
    if horizons.is_empty() {
        return Err(Error::InvalidParams("need at least one horizon".into()));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("horizons must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(horizons.len());
    for (h_idx, &horizon) in horizons.iter().enumerate() {
        let spec = TestSpec::new(horizon, TestKind::ComposedT(params.clone()))?;
        let mode = EvalMode::MonteCarlo {
            trials,
            seed: derive_seed(seed, h_idx as u64),
        };
        let matrix = build_game(grid, &spec, &mode)?;
        let solution = solve_game(&matrix)?;
        let (ci_lo, ci_hi) = bootstrap_value_ci(
            &matrix,
            trials,
            bootstrap,
            derive_seed(seed, 0x8000_0000 + h_idx as u64),
        )?;
        let max_region_length = grid
            .expert_theories
            .iter()
            .map(|e| ComposedEvaluator::prepare(e, params, horizon).region_length())
            .fold(0.0, f64::max);
        points.push(CurvePoint {
            horizon,
            value: solution.value,
            ci_lo,
            ci_hi,
            max_region_length,
        });
    }
    Ok(points)
}

/// Percentile bootstrap for the game value of a Monte Carlo matrix.
fn bootstrap_value_ci(
    matrix: &GameMatrix,
    trials: u64,
    bootstrap: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if bootstrap == 0 {
        let v = solve_game(matrix)?.value;
        return Ok((v, v));
    }
    let mut values: Vec<f64> = (0..bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            let resampled: Vec<Vec<f64>> = matrix
                .entries()
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&p| sample_binomial(&mut rng, trials, p) as f64 / trials as f64)
                        .collect()
                })
                .collect();
            solve_matrix_game(&resampled).value
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let lo_idx = ((bootstrap as f64) * 0.025).floor() as usize;
    let hi_idx = (((bootstrap as f64) * 0.975).ceil() as usize).saturating_sub(1);
    Ok((values[lo_idx.min(bootstrap - 1)], values[hi_idx.min(bootstrap - 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::GridPrior;

    fn matrix(rows: &[&[f64]]) -> GameMatrix {
        GameMatrix::from_exact(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn iid_spec(horizon: usize, tol: f64) -> TestSpec {
        TestSpec::new(horizon, TestKind::IidFrequency { tol }).unwrap()
    }

    #[test]
    fn solve_game_examples() {
        let diag = solve_game(&matrix(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!((diag.value - 0.5).abs() < 1e-10);
        assert!((diag.strategy.weights()[0] - 0.5).abs() < 1e-10);

        let dominant = solve_game(&matrix(&[&[1.0, 1.0], &[0.0, 1.0]])).unwrap();
        assert!((dominant.value - 1.0).abs() < 1e-10);
        assert!((dominant.strategy.weights()[0] - 1.0).abs() < 1e-10);

        let mixed = solve_game(&matrix(&[&[0.9, 0.2], &[0.3, 0.8]])).unwrap();
        assert!((mixed.value - 0.55).abs() < 1e-10);
        assert!(mixed.duality_gap <= 1e-6);
    }

    /// Closed form for 2x2 games: saddle point if one exists, otherwise the
    /// standard mixing formula.
    fn two_by_two_value(a: &[[f64; 2]; 2]) -> f64 {
        let maximin = a[0][0].min(a[0][1]).max(a[1][0].min(a[1][1]));
        let minimax = a[0][0].max(a[1][0]).min(a[0][1].max(a[1][1]));
        if (maximin - minimax).abs() < 1e-15 {
            return maximin;
        }
        (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / (a[0][0] + a[1][1] - a[0][1] - a[1][0])
    }

    #[test]
    fn lp_matches_two_by_two_closed_form() {
        let mut state = 99u64;
        let mut next = move || {
            state = derive_seed(state, 1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let a = [[next(), next()], [next(), next()]];
            let flat: Vec<f64> = a.iter().flatten().copied().collect();
            let distinct = flat
                .iter()
                .all(|x| flat.iter().filter(|y| (*x - **y).abs() < 1e-12).count() == 1);
            if !distinct {
                continue;
            }
            let lp = solve_game(&matrix(&[&a[0], &a[1]])).unwrap();
            let expected = two_by_two_value(&a);
            assert!(
                (lp.value - expected).abs() <= 1e-10,
                "lp {} vs closed form {expected}",
                lp.value
            );
        }
    }

    #[test]
    fn fictitious_play_brackets_lp_value() {
        let m = matrix(&[&[0.9, 0.2, 0.5], &[0.3, 0.8, 0.4], &[0.6, 0.1, 0.7]]);
        let lp = solve_game(&m).unwrap();
        let fp = fictitious_play(&m, 1e-4, 50_000_000);
        assert!(lp.value >= fp.value_lower - 1e-9);
        assert!(lp.value <= fp.value_upper + 1e-9);
        assert!((fp.value - lp.value).abs() <= 1e-4);
    }

    #[test]
    fn value_monotone_in_strategy_sets() {
        let base = vec![vec![0.3, 0.7, 0.2], vec![0.6, 0.1, 0.5]];
        let v0 = solve_game(&GameMatrix::from_exact(base.clone()).unwrap())
            .unwrap()
            .value;

        // An extra expert row can only help the maximizer.
        let mut more_rows = base.clone();
        more_rows.push(vec![0.4, 0.4, 0.9]);
        let v_rows = solve_game(&GameMatrix::from_exact(more_rows).unwrap())
            .unwrap()
            .value;
        assert!(v_rows >= v0 - 1e-9);

        // An extra truth column can only help the minimizer.
        let more_cols: Vec<Vec<f64>> = base
            .iter()
            .zip([0.25, 0.45])
            .map(|(r, extra)| {
                let mut r = r.clone();
                r.push(extra);
                r
            })
            .collect();
        let v_cols = solve_game(&GameMatrix::from_exact(more_cols).unwrap())
            .unwrap()
            .value;
        assert!(v_cols <= v0 + 1e-9);
    }

    #[test]
    fn matching_point_masses_pass_frequency_test() {
        let one = Prior::point(1.0).unwrap();
        let spec = iid_spec(5, 0.1);
        let p = pass_probability(&one, &one, &spec, &EvalMode::Exact).unwrap();
        assert_eq!(p, 1.0);

        let zero = Prior::point(0.0).unwrap();
        let p = pass_probability(&zero, &one, &spec, &EvalMode::Exact).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn exact_and_monte_carlo_agree() {
        let expert = Prior::uniform();
        let truth = Prior::point(0.5).unwrap();
        let spec = TestSpec::new(
            10,
            TestKind::Calibration { bins: 4, tol: 0.35, min_count: 1 },
        )
        .unwrap();
        let exact = pass_probability(&expert, &truth, &spec, &EvalMode::Exact).unwrap();
        let trials = 100_000;
        let (mc, se) = pass_probability_with_se(
            &expert,
            &truth,
            &spec,
            &EvalMode::MonteCarlo { trials, seed: 7 },
        )
        .unwrap();
        assert!(
            (mc - exact).abs() <= 3.0 * se.max(1e-4),
            "exact {exact} vs mc {mc} (se {se})"
        );
    }

    #[test]
    fn composed_fast_path_matches_generic_evaluation() {
        // The structure-exploiting Monte Carlo path must agree with verdict-
        // by-verdict evaluation of the honest pipeline at matched seeds.
        let params = ComposedParams {
            recovery_order: 12,
            ..ComposedParams::default()
        };
        let horizon = 400;
        let spec = TestSpec::new(horizon, TestKind::ComposedT(params.clone())).unwrap();
        let trials = 3000u64;
        for (expert, truth) in [
            (Prior::point(0.5).unwrap(), Prior::point(0.5).unwrap()),
            (Prior::uniform(), Prior::point(0.3).unwrap()),
            (Prior::point(0.4).unwrap(), Prior::uniform()),
        ] {
            let ev = ComposedEvaluator::prepare(&expert, &params, horizon);
            let (fast, fast_se) = ev.pass_probability(&truth, horizon, trials, 11);

            let mut passes = 0u64;
            for t in 0..trials {
                let path = crate::theory::sample_realization(
                    &truth,
                    horizon,
                    derive_seed(11, t),
                );
                if let Ok(trace) = ForecastTrace::generate(&expert, &path) {
                    if spec.evaluate(&trace).is_pass() {
                        passes += 1;
                    }
                }
            }
            let slow = passes as f64 / trials as f64;
            let se = fast_se.max((slow * (1.0 - slow) / trials as f64).sqrt());
            assert!(
                (fast - slow).abs() <= 4.0 * se.max(1e-3),
                "fast {fast} vs slow {slow} for {expert:?} vs {truth:?}"
            );
        }
    }

    #[test]
    fn build_game_is_symmetric_under_relabeling() {
        let points = StrategyGrid::point_masses(3).unwrap();
        let grid = StrategyGrid::new(points.clone(), points).unwrap();
        let spec = iid_spec(6, 0.2);
        let m = build_game(&grid, &spec, &EvalMode::Exact).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.get(i, j) - m.get(2 - i, 2 - j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn always_pass_test_has_value_one() {
        let points = StrategyGrid::point_masses(3).unwrap();
        let grid = StrategyGrid::new(points.clone(), points).unwrap();
        let spec = iid_spec(4, 1.0);
        let report = demonstrate_prop1(&spec, &grid, 0.01, &EvalMode::Exact).unwrap();
        assert_eq!(report.value, 1.0);
        assert_eq!(report.epsilon_measured, 0.0);
        assert!(report.bound_satisfied);
    }

    #[test]
    fn single_truth_grid_reaches_diagonal_value() {
        let truth = vec![Prior::point(0.5).unwrap()];
        let grid = StrategyGrid::new(truth.clone(), truth).unwrap();
        let spec = iid_spec(8, 0.3);
        let m = build_game(&grid, &spec, &EvalMode::Exact).unwrap();
        let report = demonstrate_prop1(&spec, &grid, 0.2, &EvalMode::Exact).unwrap();
        assert!((report.value - m.get(0, 0)).abs() < 1e-9);
    }

    #[test]
    fn precondition_failure_is_reported() {
        // A calibration test this tight rejects the fair coin often.
        let spec = TestSpec::new(
            8,
            TestKind::Calibration { bins: 2, tol: 0.01, min_count: 1 },
        )
        .unwrap();
        let points = vec![Prior::point(0.5).unwrap()];
        let grid = StrategyGrid::new(points.clone(), points).unwrap();
        assert!(matches!(
            demonstrate_prop1(&spec, &grid, 0.05, &EvalMode::Exact),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn single_truth_curve_is_constant_at_the_diagonal() {
        let params = ComposedParams {
            recovery_order: 12,
            ..ComposedParams::default()
        };
        let solo = vec![Prior::point(0.5).unwrap()];
        let grid = StrategyGrid::new(solo.clone(), solo).unwrap();
        let curve = manipulation_curve(&params, &grid, &[200, 400], 2000, 5, 0).unwrap();
        for pt in &curve {
            assert!((pt.value - 1.0).abs() < 0.01, "diagonal value {}", pt.value);
        }
    }

    #[test]
    fn exact_mode_rejects_long_horizons() {
        let spec = iid_spec(21, 0.1);
        let p = Prior::point(0.5).unwrap();
        assert!(matches!(
            pass_probability(&p, &p, &spec, &EvalMode::Exact),
            Err(Error::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn grid_expert_zero_mass_paths_fail() {
        // Expert supported on {0,1} dies on any mixed path; against a fair
        // coin the pass probability collapses to the all-ones/all-zeros mass
        // under a test that passes every defined trace.
        let expert = Prior::Grid(GridPrior::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap());
        let truth = Prior::point(0.5).unwrap();
        let always_pass = TestSpec::new(
            6,
            TestKind::Calibration { bins: 1, tol: 1.0, min_count: 1 },
        )
        .unwrap();
        let p = pass_probability(&expert, &truth, &always_pass, &EvalMode::Exact).unwrap();
        assert!((p - 2.0 / 64.0).abs() < 1e-12, "p = {p}");
    }
}
