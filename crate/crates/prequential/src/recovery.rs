//! Prior recovery from a single forecast trace.
//!
//! For an exchangeable forecaster the trace determines the mixing prior: the
//! realized-path cylinder probabilities follow from the forecasts by
//! induction, each cylinder probability is a degree-n polynomial in the
//! prior's moments whose leading moment is new, and a distribution on [0,1]
//! is pinned down by its moments. This module makes each of those steps
//! finite: [`recover_path_probs`], [`recover_moments`] (a triangular solve,
//! with an exact-rational twin), [`hausdorff_check`] (finite complete
//! monotonicity), and [`reconstruct_prior`] (nonnegative least squares on a
//! fixed grid).
//!
//! The triangular solve multiplies by binomial coefficients, so float-mode
//! accuracy degrades as the order grows: roughly a digit per two orders.
//! Order 16 is the practical float ceiling (round-trip error ~1e-9); beyond
//! that, use the exact lane.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::theory::{ForecastTrace, GridPrior, PartialRealization};

/// Default float-mode recovery order: binomial growth costs about a digit
/// per two orders, so 16 keeps round-trip error near 1e-9.
pub const DEFAULT_RECOVERY_ORDER: usize = 16;

/// Consistency tolerance for traces whose forecasts came from exact
/// rationals through float arithmetic.
pub const RATIONAL_SOURCE_TOL: f64 = 1e-9;

/// Consistency tolerance for traces whose forecasts came from quadrature
/// approximations.
pub const QUADRATURE_SOURCE_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Path probabilities
// ---------------------------------------------------------------------------

/// Cylinder probabilities `c_0..c_N` along the observed path, recovered from
/// the forecasts alone: `c_0 = 1` and each step multiplies in the forecast
/// probability of the outcome that occurred. Serializes as a plain array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathProbabilities {
    probs: Vec<f64>,
}

impl PathProbabilities {
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn recover_path_probs(trace: &ForecastTrace) -> PathProbabilities {
    let mut probs = Vec::with_capacity(trace.horizon() + 1);
    let mut c = 1.0;
    probs.push(c);
    for (p, s) in trace.forecasts().iter().zip(trace.outcomes().iter()) {
        c *= if s.is_one() { *p } else { 1.0 - *p };
        probs.push(c);
    }
    PathProbabilities { probs }
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// Moments `m_0..m_K` of a (candidate) mixing prior. `m_0` must be 1; the
/// remaining entries are whatever the producing computation yielded — use
/// [`hausdorff_check`] to decide whether they are genuine moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MomentVector {
    moments: Vec<f64>,
}

impl MomentVector {
    pub fn new(moments: Vec<f64>) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::InvalidInput("moment vector must not be empty".into()));
        }
        if moments.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("moment vector has non-finite entry".into()));
        }
        if (moments[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "m_0 must be 1, got {}",
                moments[0]
            )));
        }
        Ok(MomentVector { moments })
    }

    /// The order K; the vector holds K+1 entries.
    pub fn order(&self) -> usize {
        self.moments.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.moments
    }

    pub fn get(&self, k: usize) -> f64 {
        self.moments[k]
    }
}

impl TryFrom<Vec<f64>> for MomentVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        MomentVector::new(v)
    }
}

impl From<MomentVector> for Vec<f64> {
    fn from(m: MomentVector) -> Self {
        m.moments
    }
}

/// Pascal's triangle row-by-row; exact in f64 well past the orders the
/// float lane can survive anyway.
fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut row = vec![1.0; i + 1];
        for j in 1..i {
            row[j] = rows[i - 1][j - 1] + rows[i - 1][j];
        }
        rows.push(row);
    }
    rows
}

/// Recovers `m_0..m_order` from the trace by the triangular solve
///
/// `c_n = sum_{j=0}^{n-k_n} C(n-k_n, j) (-1)^j m_{k_n+j}`
///
/// where `k_n` counts the ones among the first `n` outcomes: each cylinder
/// probability introduces exactly one new moment, `m_n`. A solved moment
/// falling outside `[min(0, m_{n-1}), m_{n-1}]` by more than `tol` means no
/// exchangeable theory could have produced these forecasts.
pub fn recover_moments(trace: &ForecastTrace, order: usize, tol: f64) -> Result<MomentVector> {
    if order > trace.horizon() {
        return Err(Error::InvalidParams(format!(
            "recovery order {order} exceeds trace horizon {}",
            trace.horizon()
        )));
    }
    let c = recover_path_probs(trace);
    let binom = binomial_table(order);
    let mut moments = vec![1.0_f64];
    let mut ones = 0usize;
    for n in 1..=order {
        if trace.outcomes().get(n - 1).expect("n <= horizon").is_one() {
            ones += 1;
        }
        let zeros = n - ones;
        // All terms but the leading one use already-solved moments.
        let mut partial = 0.0;
        for j in 0..zeros {
            let term = binom[zeros][j] * moments[ones + j];
            if j % 2 == 0 {
                partial += term;
            } else {
                partial -= term;
            }
        }
        let sign = if zeros % 2 == 0 { 1.0 } else { -1.0 };
        let m_n = sign * (c.as_slice()[n] - partial);
        let prev = moments[n - 1];
        let lo = 0.0_f64.min(prev);
        if m_n < lo - tol || m_n > prev + tol {
            return Err(Error::InconsistentTrace {
                index: n,
                value: m_n,
                lo,
                hi: prev,
                tol,
            });
        }
        moments.push(m_n);
    }
    MomentVector::new(moments)
}

/// Exact-rational twin of [`recover_moments`]: same recursion over
/// `BigRational` forecasts, with a strict consistency guard (no tolerance).
pub fn recover_moments_exact(
    forecasts: &[BigRational],
    outcomes: &PartialRealization,
    order: usize,
) -> Result<Vec<BigRational>> {
    if forecasts.len() != outcomes.len() {
        return Err(Error::InvalidInput(format!(
            "trace has {} forecasts but {} outcomes",
            forecasts.len(),
            outcomes.len()
        )));
    }
    if order > forecasts.len() {
        return Err(Error::InvalidParams(format!(
            "recovery order {order} exceeds trace horizon {}",
            forecasts.len()
        )));
    }
    let one = BigRational::one();
    for p in forecasts {
        if p.is_negative() || *p > one {
            return Err(Error::InvalidInput(format!("forecast {p} outside [0,1]")));
        }
    }

    // Cylinder probabilities along the path.
    let mut c = Vec::with_capacity(order + 1);
    c.push(BigRational::one());
    for n in 0..order {
        let p = &forecasts[n];
        let factor = if outcomes.get(n).expect("n < horizon").is_one() {
            p.clone()
        } else {
            &one - p
        };
        let next = &c[n] * factor;
        c.push(next);
    }

    let mut binom: Vec<Vec<BigInt>> = Vec::with_capacity(order + 1);
    for i in 0..=order {
        let mut row = vec![BigInt::one(); i + 1];
        for j in 1..i {
            row[j] = &binom[i - 1][j - 1] + &binom[i - 1][j];
        }
        binom.push(row);
    }

    let mut moments = vec![BigRational::one()];
    let mut ones = 0usize;
    for n in 1..=order {
        if outcomes.get(n - 1).expect("n <= horizon").is_one() {
            ones += 1;
        }
        let zeros = n - ones;
        let mut partial = BigRational::zero();
        for j in 0..zeros {
            let term = BigRational::from(binom[zeros][j].clone()) * &moments[ones + j];
            if j % 2 == 0 {
                partial += term;
            } else {
                partial -= term;
            }
        }
        let diff = &c[n] - partial;
        let m_n = if zeros % 2 == 0 { diff } else { -diff };
        let prev = moments[n - 1].clone();
        if m_n.is_negative() || m_n > prev {
            return Err(Error::InconsistentTrace {
                index: n,
                value: m_n.to_f64().unwrap_or(f64::NAN),
                lo: 0.0,
                hi: prev.to_f64().unwrap_or(f64::NAN),
                tol: 0.0,
            });
        }
        moments.push(m_n);
    }
    Ok(moments)
}

// ---------------------------------------------------------------------------
// Hausdorff validity
// ---------------------------------------------------------------------------

/// Finite Hausdorff condition: `(-1)^j Δ^j m_k >= -tol` for all `j + k <= K`.
/// For genuine moments of a measure on [0,1] the quantity equals
/// `∫ q^k (1-q)^j` dλ, which is nonnegative.
pub fn hausdorff_check(m: &MomentVector, tol: f64) -> bool {
    let mut row = m.as_slice().to_vec();
    loop {
        if row.iter().any(|&v| v < -tol) {
            return false;
        }
        if row.len() == 1 {
            return true;
        }
        // (-1)^{j+1} Δ^{j+1} m_k = r_j[k] - r_j[k+1].
        row = row.windows(2).map(|w| w[0] - w[1]).collect();
    }
}

// ---------------------------------------------------------------------------
// Grid reconstruction
// ---------------------------------------------------------------------------

/// Result of fitting a grid prior to a moment vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub prior: GridPrior,
    /// Achieved squared moment mismatch `sum_k (m_k(fit) - m_k)^2`.
    pub moment_mismatch: f64,
}

/// Lawson–Hanson nonnegative least squares: `min ||A x - b||` s.t. `x >= 0`.
/// Deterministic: ties in the gradient selection break toward the lowest
/// index, and the iteration schedule is fixed by the inputs.
fn nnls(a: &[f64], rows: usize, cols: usize, b: &[f64], max_iter: usize) -> Vec<f64> {
    let mut x = vec![0.0; cols];
    let mut passive = vec![false; cols];
    let mut iter = 0;

    loop {
        // Gradient of the residual: w = A^T (b - A x).
        let mut residual = b.to_vec();
        for (i, r) in residual.iter_mut().enumerate() {
            for j in 0..cols {
                *r -= a[i * cols + j] * x[j];
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cols {
            if passive[j] {
                continue;
            }
            let mut w = 0.0;
            for i in 0..rows {
                w += a[i * cols + j] * residual[i];
            }
            if w > 1e-12 && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((j, w));
            }
        }
        let Some((enter, _)) = best else {
            return x;
        };
        passive[enter] = true;

        loop {
            iter += 1;
            if iter > max_iter {
                return x;
            }
            // Unconstrained least squares on the passive set.
            let active_cols: Vec<usize> =
                (0..cols).filter(|&j| passive[j]).collect();
            let mut sub = vec![0.0; rows * active_cols.len()];
            for i in 0..rows {
                for (jj, &j) in active_cols.iter().enumerate() {
                    sub[i * active_cols.len() + jj] = a[i * cols + j];
                }
            }
            let z = lstsq(&sub, rows, active_cols.len(), b);

            if z.iter().all(|&v| v > 0.0) {
                for (jj, &j) in active_cols.iter().enumerate() {
                    x[j] = z[jj];
                }
                break;
            }
            // Step toward z only as far as feasibility allows, then drop
            // the blocking variable.
            let mut alpha = f64::INFINITY;
            for (jj, &j) in active_cols.iter().enumerate() {
                if z[jj] <= 0.0 {
                    let denom = x[j] - z[jj];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (jj, &j) in active_cols.iter().enumerate() {
                x[j] += alpha * (z[jj] - x[j]);
            }
            for &j in &active_cols {
                if x[j] <= 1e-14 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                // Everything got dropped; give up on this entering index.
                break;
            }
        }
    }
}

/// Fits a grid prior on the uniform grid `{0, 1/(G-1), ..., 1}` to the
/// moment vector by nonnegative least squares (the `m_0 = 1` row doubles as
/// the soft sum-to-one constraint; weights are renormalized afterward).
/// Errors if the best achievable squared mismatch exceeds
/// `feasibility_threshold`.
pub fn reconstruct_prior(
    m: &MomentVector,
    grid_size: usize,
    feasibility_threshold: f64,
) -> Result<Reconstruction> {
    if grid_size < 2 {
        return Err(Error::InvalidParams(format!(
            "reconstruction grid size must be at least 2, got {grid_size}"
        )));
    }
    let order = m.order();
    let points: Vec<f64> = (0..grid_size)
        .map(|i| i as f64 / (grid_size - 1) as f64)
        .collect();

    // Vandermonde-style design matrix: row k holds q_i^k.
    let rows = order + 1;
    let mut a = vec![0.0; rows * grid_size];
    for (j, &q) in points.iter().enumerate() {
        let mut pw = 1.0;
        for k in 0..rows {
            a[k * grid_size + j] = pw;
            pw *= q;
        }
    }

    let weights = nnls(&a, rows, grid_size, m.as_slice(), 30 * grid_size);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InfeasibleMoments {
            mismatch: f64::INFINITY,
            threshold: feasibility_threshold,
        });
    }
    let prior = GridPrior::new_normalized(points, weights)?;

    let mut mismatch = 0.0;
    let fitted = crate::theory::Prior::Grid(prior.clone()).moments(order);
    for (f, t) in fitted.iter().zip(m.as_slice()) {
        mismatch += (f - t) * (f - t);
    }
    if mismatch > feasibility_threshold {
        return Err(Error::InfeasibleMoments {
            mismatch,
            threshold: feasibility_threshold,
        });
    }
    Ok(Reconstruction {
        prior,
        moment_mismatch: mismatch,
    })
}

/// Convenience: recover moments from a trace generated by an exchangeable
/// forecaster and report true-moment agreement. Test and harness helper.
pub fn roundtrip_error(trace: &ForecastTrace, prior: &crate::theory::Prior, order: usize) -> Result<f64> {
    let recovered = recover_moments(trace, order, QUADRATURE_SOURCE_TOL)?;
    let truth = prior.moments(order);
    Ok(recovered
        .as_slice()
        .iter()
        .zip(&truth)
        .map(|(r, t)| (r - t).abs())
        .fold(0.0, f64::max))
}
