//! Exchangeable theories as parameter priors over the coin bias.
//!
//! An exchangeable distribution over infinite binary sequences is a mixture
//! of i.i.d. coin processes, so a theory is represented here by its mixing
//! prior over the bias `q` in `[0,1]`. Three prior representations are
//! supported: a discrete grid of atoms (the universal fallback), a Beta
//! density (closed-form fast path), and a degenerate point mass. Everything
//! downstream — forecasts, path probabilities, posterior updates, sampling —
//! is a function of the prior and the observed prefix, and only ever through
//! the pair (number of ones, length).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the weights-sum-to-one invariant of [`GridPrior`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Default grid size when approximating a continuous prior by midpoint
/// quadrature (see [`GridPrior::beta_quadrature`]).
pub const DEFAULT_QUADRATURE_GRID_SIZE: usize = 1001;

// ---------------------------------------------------------------------------
// Outcomes and partial realizations
// ---------------------------------------------------------------------------

/// A single binary outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Outcome::Zero),
            1 => Ok(Outcome::One),
            other => Err(Error::InvalidInput(format!(
                "outcome must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }

    pub fn is_one(self) -> bool {
        matches!(self, Outcome::One)
    }
}

impl From<bool> for Outcome {
    fn from(b: bool) -> Self {
        if b {
            Outcome::One
        } else {
            Outcome::Zero
        }
    }
}

/// A finite prefix of a realization. The empty prefix is valid.
///
/// Serializes as a string of `'0'`/`'1'` characters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PartialRealization(Vec<Outcome>);

impl PartialRealization {
    pub fn empty() -> Self {
        PartialRealization(Vec::new())
    }

    pub fn from_outcomes(symbols: Vec<Outcome>) -> Self {
        PartialRealization(symbols)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| Outcome::from_bit(b))
            .collect::<Result<Vec<_>>>()
            .map(PartialRealization)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of ones among the symbols.
    pub fn ones(&self) -> u64 {
        self.0.iter().filter(|s| s.is_one()).count() as u64
    }

    pub fn push(&mut self, s: Outcome) {
        self.0.push(s);
    }

    /// A copy with one more symbol appended.
    pub fn extended(&self, s: Outcome) -> Self {
        let mut next = self.clone();
        next.push(s);
        next
    }

    /// The first `n` symbols as a borrowed prefix.
    pub fn prefix(&self, n: usize) -> Self {
        PartialRealization(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn get(&self, i: usize) -> Option<Outcome> {
        self.0.get(i).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[Outcome] {
        &self.0
    }
}

impl fmt::Display for PartialRealization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.bit())?;
        }
        Ok(())
    }
}

impl FromStr for PartialRealization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(Outcome::Zero),
                '1' => Ok(Outcome::One),
                other => Err(Error::InvalidInput(format!(
                    "realization strings may contain only '0' and '1', got {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PartialRealization)
    }
}

impl Serialize for PartialRealization {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PartialRealization {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

/// A discrete prior: atoms at strictly increasing points of `[0,1]` with
/// nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridPrior {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<GridRepr> for GridPrior {
    type Error = Error;

    fn try_from(repr: GridRepr) -> Result<Self> {
        GridPrior::new(repr.points, repr.weights)
    }
}

impl From<GridPrior> for GridRepr {
    fn from(g: GridPrior) -> Self {
        GridRepr {
            points: g.points,
            weights: g.weights,
        }
    }
}

impl GridPrior {
    /// Validates points and weights. The weight sum must already be within
    /// [`WEIGHT_SUM_TOL`] of one; see [`GridPrior::new_normalized`] otherwise.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("grid prior needs at least one atom".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "grid prior has {} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        for &q in &points {
            if !(0.0..=1.0).contains(&q) || q.is_nan() {
                return Err(Error::InvalidInput(format!("grid point {q} outside [0,1]")));
            }
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "grid points must be strictly increasing".into(),
            ));
        }
        for &w in &weights {
            if !(w >= 0.0) {
                return Err(Error::InvalidInput(format!("grid weight {w} is negative")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "grid weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}"
            )));
        }
        Ok(GridPrior { points, weights })
    }

    /// Normalizes arbitrary nonnegative weights (not all zero) and validates.
    pub fn new_normalized(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidInput(
                "grid weights must have positive sum".into(),
            ));
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        // Renormalized sums can still sit an ulp or two off one; snap them.
        let mut prior = GridPrior::new(points, weights)?;
        let s: f64 = prior.weights.iter().sum();
        prior.weights.iter_mut().for_each(|w| *w /= s);
        Ok(prior)
    }

    /// Midpoint-rule quadrature of a Beta(alpha, beta) density on a uniform
    /// grid: atoms at `(i + 1/2)/size` weighted by the density there.
    /// [`DEFAULT_QUADRATURE_GRID_SIZE`] is the conventional size.
    pub fn beta_quadrature(alpha: f64, beta: f64, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("quadrature grid size must be positive".into()));
        }
        BetaPrior::new(alpha, beta)?;
        let points: Vec<f64> = (0..size).map(|i| (i as f64 + 0.5) / size as f64).collect();
        let weights: Vec<f64> = points
            .iter()
            .map(|&q| q.powf(alpha - 1.0) * (1.0 - q).powf(beta - 1.0))
            .collect();
        GridPrior::new_normalized(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Atom pairs `(q, w)`, including zero-weight atoms.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Left-continuous generalized inverse of the CDF: the smallest atom at
    /// which the cumulative weight reaches `level`.
    pub fn quantile(&self, level: f64) -> f64 {
        let mut cum = 0.0;
        for (q, w) in self.atoms() {
            cum += w;
            if cum >= level {
                return q;
            }
        }
        *self.points.last().expect("grid prior is non-empty")
    }

    /// Probability mass on `[lo, hi]`.
    pub fn mass_on(&self, lo: f64, hi: f64) -> f64 {
        self.atoms()
            .filter(|&(q, _)| q >= lo && q <= hi)
            .map(|(_, w)| w)
            .sum()
    }
}

/// A Beta(alpha, beta) prior over the coin bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaPrior {
    alpha: f64,
    beta: f64,
}

impl BetaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "beta prior requires finite alpha > 0 and beta > 0, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaPrior { alpha, beta })
    }

    /// The uniform prior on `[0,1]`.
    pub fn uniform() -> Self {
        BetaPrior { alpha: 1.0, beta: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// A parameter prior over the coin bias: the mixing distribution of an
/// exchangeable theory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub enum Prior {
    Grid(GridPrior),
    Beta(BetaPrior),
    Point(f64),
}

/// Serialized form: `{"kind": "grid"|"beta"|"point", ...}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PriorRepr {
    Grid { points: Vec<f64>, weights: Vec<f64> },
    Beta { alpha: f64, beta: f64 },
    Point { q: f64 },
}

impl TryFrom<PriorRepr> for Prior {
    type Error = Error;

    fn try_from(repr: PriorRepr) -> Result<Self> {
        match repr {
            PriorRepr::Grid { points, weights } => Ok(Prior::Grid(GridPrior::new(points, weights)?)),
            PriorRepr::Beta { alpha, beta } => Ok(Prior::Beta(BetaPrior::new(alpha, beta)?)),
            PriorRepr::Point { q } => Prior::point(q),
        }
    }
}

impl From<Prior> for PriorRepr {
    fn from(prior: Prior) -> Self {
        match prior {
            Prior::Grid(g) => PriorRepr::Grid {
                points: g.points,
                weights: g.weights,
            },
            Prior::Beta(b) => PriorRepr::Beta {
                alpha: b.alpha,
                beta: b.beta,
            },
            Prior::Point(q) => PriorRepr::Point { q },
        }
    }
}

impl From<GridPrior> for Prior {
    fn from(g: GridPrior) -> Self {
        Prior::Grid(g)
    }
}

impl From<BetaPrior> for Prior {
    fn from(b: BetaPrior) -> Self {
        Prior::Beta(b)
    }
}

/// `k * ln(q)` with the `k = 0` convention `0 * ln(0) = 0`.
fn xlogy(k: u64, q: f64) -> f64 {
    if k == 0 {
        0.0
    } else if q == 0.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * q.ln()
    }
}

impl Prior {
    /// A degenerate prior concentrated at `q`.
    pub fn point(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) || q.is_nan() {
            return Err(Error::InvalidInput(format!("point mass {q} outside [0,1]")));
        }
        Ok(Prior::Point(q))
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Ok(Prior::Beta(BetaPrior::new(alpha, beta)?))
    }

    pub fn uniform() -> Self {
        Prior::Beta(BetaPrior::uniform())
    }

    /// Probability assigned to the cylinder set of all realizations
    /// extending `sigma`. Total: the empty prefix has probability one.
    pub fn path_probability(&self, sigma: &PartialRealization) -> f64 {
        self.path_probability_counts(sigma.ones(), sigma.len() as u64)
    }

    /// Same as [`Prior::path_probability`]; exchangeability means the value
    /// depends on the prefix only through (ones, length).
    pub fn path_probability_counts(&self, ones: u64, len: u64) -> f64 {
        debug_assert!(ones <= len);
        let zeros = len - ones;
        match self {
            Prior::Point(q) => pow_counts(*q, ones) * pow_counts(1.0 - *q, zeros),
            Prior::Grid(g) => g
                .atoms()
                .map(|(q, w)| w * pow_counts(q, ones) * pow_counts(1.0 - q, zeros))
                .sum(),
            Prior::Beta(b) => {
                // B(alpha + ones, beta + zeros) / B(alpha, beta), accumulated
                // in log space so long prefixes degrade to zero gracefully.
                let mut log = 0.0;
                for i in 0..ones {
                    log += (b.alpha + i as f64).ln();
                }
                for i in 0..zeros {
                    log += (b.beta + i as f64).ln();
                }
                for i in 0..len {
                    log -= (b.alpha + b.beta + i as f64).ln();
                }
                log.exp()
            }
        }
    }

    /// Whether the prior assigns positive probability to prefixes with the
    /// given counts. This is a structural check, immune to float underflow.
    pub fn supports_counts(&self, ones: u64, len: u64) -> bool {
        let zeros = len - ones;
        match self {
            Prior::Beta(_) => true,
            Prior::Point(q) => (ones == 0 || *q > 0.0) && (zeros == 0 || *q < 1.0),
            Prior::Grid(g) => g.atoms().any(|(q, w)| {
                w > 0.0 && (ones == 0 || q > 0.0) && (zeros == 0 || q < 1.0)
            }),
        }
    }

    /// The one-step-ahead forecast (probability of outcome 1) after
    /// `history`: the ratio of the extended to the current cylinder
    /// probability, computed in posterior form so it stays well-scaled for
    /// long histories.
    pub fn forecast(&self, history: &PartialRealization) -> Result<f64> {
        self.forecast_counts(history.ones(), history.len() as u64)
    }

    /// Counts-based form of [`Prior::forecast`].
    pub fn forecast_counts(&self, ones: u64, len: u64) -> Result<f64> {
        if !self.supports_counts(ones, len) {
            return Err(Error::ZeroMassHistory);
        }
        let zeros = len - ones;
        match self {
            Prior::Point(q) => Ok(*q),
            Prior::Beta(b) => Ok((b.alpha + ones as f64) / (b.alpha + b.beta + len as f64)),
            Prior::Grid(g) => {
                if len <= 64 {
                    // Direct products are exact enough here and avoid the
                    // ln/exp round-trip.
                    let mut norm = 0.0;
                    let mut mean = 0.0;
                    for (q, w) in g.atoms() {
                        let lik = w * pow_counts(q, ones) * pow_counts(1.0 - q, zeros);
                        norm += lik;
                        mean += lik * q;
                    }
                    if norm > 0.0 {
                        return Ok(mean / norm);
                    }
                    // Positive support but every likelihood underflowed;
                    // fall through to the log-space route.
                }
                let logs: Vec<f64> = g
                    .atoms()
                    .map(|(q, w)| {
                        if w > 0.0 {
                            w.ln() + xlogy(ones, q) + xlogy(zeros, 1.0 - q)
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                debug_assert!(max.is_finite(), "supports_counts guaranteed an atom");
                let mut norm = 0.0;
                let mut mean = 0.0;
                for (log, (q, _)) in logs.iter().zip(g.atoms()) {
                    let rel = (log - max).exp();
                    norm += rel;
                    mean += rel * q;
                }
                Ok(mean / norm)
            }
        }
    }

    /// Bayes update on a single outcome. Grid priors reweight and
    /// renormalize, Beta priors update conjugately, point masses are
    /// invariant.
    pub fn posterior(&self, outcome: Outcome) -> Result<Prior> {
        match self {
            Prior::Point(q) => {
                let possible = if outcome.is_one() { *q > 0.0 } else { *q < 1.0 };
                if possible {
                    Ok(Prior::Point(*q))
                } else {
                    Err(Error::ZeroMassOutcome)
                }
            }
            Prior::Beta(b) => {
                let (alpha, beta) = if outcome.is_one() {
                    (b.alpha + 1.0, b.beta)
                } else {
                    (b.alpha, b.beta + 1.0)
                };
                Ok(Prior::Beta(BetaPrior { alpha, beta }))
            }
            Prior::Grid(g) => {
                let reweighted: Vec<f64> = g
                    .atoms()
                    .map(|(q, w)| w * if outcome.is_one() { q } else { 1.0 - q })
                    .collect();
                let norm: f64 = reweighted.iter().sum();
                if !(norm > 0.0) {
                    return Err(Error::ZeroMassOutcome);
                }
                Ok(Prior::Grid(GridPrior::new_normalized(
                    g.points.clone(),
                    reweighted,
                )?))
            }
        }
    }

    /// Moments `m_0..m_order` of the prior: `m_k` is the k-th moment of the
    /// bias under the mixing distribution.
    pub fn moments(&self, order: usize) -> Vec<f64> {
        match self {
            Prior::Point(q) => (0..=order).map(|k| pow_counts(*q, k as u64)).collect(),
            Prior::Grid(g) => (0..=order)
                .map(|k| g.atoms().map(|(q, w)| w * pow_counts(q, k as u64)).sum())
                .collect(),
            Prior::Beta(b) => {
                let mut out = Vec::with_capacity(order + 1);
                let mut m = 1.0;
                out.push(m);
                for i in 0..order {
                    m *= (b.alpha + i as f64) / (b.alpha + b.beta + i as f64);
                    out.push(m);
                }
                out
            }
        }
    }

    /// Mean of the bias under the prior; equals the forecast after the
    /// empty history.
    pub fn mean(&self) -> f64 {
        match self {
            Prior::Point(q) => *q,
            Prior::Beta(b) => b.alpha / (b.alpha + b.beta),
            Prior::Grid(g) => g.atoms().map(|(q, w)| w * q).sum(),
        }
    }

    /// Draws a bias from the prior.
    pub fn sample_parameter<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Prior::Point(q) => *q,
            Prior::Beta(b) => rand_distr::Beta::new(b.alpha, b.beta)
                .expect("validated at construction")
                .sample(rng),
            Prior::Grid(g) => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                for (q, w) in g.atoms() {
                    cum += w;
                    if u < cum {
                        return q;
                    }
                }
                *g.points.last().expect("grid prior is non-empty")
            }
        }
    }
}

/// `q^k` with the convention `0^0 = 1`.
fn pow_counts(q: f64, k: u64) -> f64 {
    if k == 0 {
        1.0
    } else if k <= i32::MAX as u64 {
        q.powi(k as i32)
    } else {
        q.powf(k as f64)
    }
}

// ---------------------------------------------------------------------------
// Sequential forecasting state
// ---------------------------------------------------------------------------

/// Incremental forecaster: maintains the posterior after each observed
/// outcome so each step costs O(atoms) at worst and O(1) for Beta and point
/// priors. Chaining [`SequentialForecaster::observe`] reproduces
/// [`Prior::forecast`] on every prefix.
#[derive(Clone, Debug)]
pub struct SequentialForecaster {
    state: Prior,
    dead: bool,
}

impl SequentialForecaster {
    pub fn new(prior: &Prior) -> Self {
        SequentialForecaster {
            state: prior.clone(),
            dead: false,
        }
    }

    /// Forecast for the next period given everything observed so far.
    pub fn forecast(&self) -> Result<f64> {
        if self.dead {
            return Err(Error::ZeroMassHistory);
        }
        self.state.forecast_counts(0, 0)
    }

    /// Folds one outcome into the posterior.
    pub fn observe(&mut self, outcome: Outcome) -> Result<()> {
        if self.dead {
            return Err(Error::ZeroMassHistory);
        }
        match self.state.posterior(outcome) {
            Ok(next) => {
                self.state = next;
                Ok(())
            }
            Err(e) => {
                self.dead = true;
                Err(e)
            }
        }
    }

    pub fn state(&self) -> &Prior {
        &self.state
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Paired forecasts and outcomes along a single realized path: the entire
/// input a prequential test is allowed to see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TraceRepr", into = "TraceRepr")]
pub struct ForecastTrace {
    forecasts: Vec<f64>,
    outcomes: PartialRealization,
}

#[derive(Serialize, Deserialize)]
struct TraceRepr {
    forecasts: Vec<f64>,
    outcomes: PartialRealization,
}

impl TryFrom<TraceRepr> for ForecastTrace {
    type Error = Error;

    fn try_from(repr: TraceRepr) -> Result<Self> {
        ForecastTrace::new(repr.forecasts, repr.outcomes)
    }
}

impl From<ForecastTrace> for TraceRepr {
    fn from(t: ForecastTrace) -> Self {
        TraceRepr {
            forecasts: t.forecasts,
            outcomes: t.outcomes,
        }
    }
}

impl ForecastTrace {
    pub fn new(forecasts: Vec<f64>, outcomes: PartialRealization) -> Result<Self> {
        if forecasts.len() != outcomes.len() {
            return Err(Error::InvalidInput(format!(
                "trace has {} forecasts but {} outcomes",
                forecasts.len(),
                outcomes.len()
            )));
        }
        for &p in &forecasts {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::InvalidInput(format!("forecast {p} outside [0,1]")));
            }
        }
        Ok(ForecastTrace { forecasts, outcomes })
    }

    /// Runs `forecaster` along `path`, recording the forecast made before
    /// each outcome. Fails with [`Error::ZeroMassHistory`] if the forecaster
    /// assigns zero probability to some realized prefix.
    pub fn generate(forecaster: &Prior, path: &PartialRealization) -> Result<Self> {
        let mut state = SequentialForecaster::new(forecaster);
        let mut forecasts = Vec::with_capacity(path.len());
        for s in path.iter() {
            forecasts.push(state.forecast()?);
            state.observe(s).map_err(|_| Error::ZeroMassHistory)?;
        }
        ForecastTrace::new(forecasts, path.clone())
    }

    pub fn horizon(&self) -> usize {
        self.forecasts.len()
    }

    pub fn forecasts(&self) -> &[f64] {
        &self.forecasts
    }

    pub fn outcomes(&self) -> &PartialRealization {
        &self.outcomes
    }

    /// The first `n` periods as a new trace.
    pub fn truncated(&self, n: usize) -> ForecastTrace {
        let n = n.min(self.horizon());
        ForecastTrace {
            forecasts: self.forecasts[..n].to_vec(),
            outcomes: self.outcomes.prefix(n),
        }
    }
}

// ---------------------------------------------------------------------------
// Sampling and summary statistics
// ---------------------------------------------------------------------------

/// Two-stage sample: draw a bias from the prior, then `horizon` independent
/// coin flips with that bias. Deterministic given the seed.
pub fn sample_realization(prior: &Prior, horizon: usize, seed: u64) -> PartialRealization {
    sample_realization_with_parameter(prior, horizon, seed).1
}

/// Like [`sample_realization`] but also returns the drawn bias.
pub fn sample_realization_with_parameter(
    prior: &Prior,
    horizon: usize,
    seed: u64,
) -> (f64, PartialRealization) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = prior.sample_parameter(&mut rng);
    let mut symbols = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let u: f64 = rng.random();
        symbols.push(Outcome::from(u < q));
    }
    (q, PartialRealization::from_outcomes(symbols))
}

/// Average of the symbols; errors on the empty realization.
pub fn empirical_mean(x: &PartialRealization) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyRealization);
    }
    Ok(x.ones() as f64 / x.len() as f64)
}

/// Derives a per-stream seed from a master seed.
///
/// The mixer is SplitMix64's finalizer applied as
/// `mix(master ^ mix(stream))`; it is a pure bit function, stable across
/// platforms and releases, so experiment outputs survive refactors.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(master ^ mix(stream))
}
