//! Exact-rational grid priors.
//!
//! The float moment recovery loses roughly a digit of accuracy per couple of
//! orders to binomial-coefficient growth. This lane removes representation
//! error entirely: a grid prior with rational atoms forecasts in
//! `BigRational` arithmetic, and the recovery solve (see
//! [`crate::recovery::recover_moments_exact`]) then round-trips the prior's
//! moments bit-exactly at any order the horizon allows.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::theory::{GridPrior, PartialRealization};

/// A discrete prior with rational atom positions and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalGridPrior {
    points: Vec<BigRational>,
    weights: Vec<BigRational>,
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl RationalGridPrior {
    pub fn new(points: Vec<BigRational>, weights: Vec<BigRational>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidInput(
                "rational grid prior needs matching non-empty points and weights".into(),
            ));
        }
        let zero = BigRational::zero();
        let one = BigRational::one();
        for p in &points {
            if *p < zero || *p > one {
                return Err(Error::InvalidInput(format!("rational grid point {p} outside [0,1]")));
            }
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "rational grid points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidInput("rational grid weight is negative".into()));
        }
        let sum: BigRational = weights.iter().cloned().sum();
        if sum != one {
            return Err(Error::InvalidInput(format!(
                "rational grid weights sum to {sum}, expected exactly 1"
            )));
        }
        Ok(RationalGridPrior { points, weights })
    }

    /// Normalizes positive-sum weights exactly and validates.
    pub fn new_normalized(points: Vec<BigRational>, weights: Vec<BigRational>) -> Result<Self> {
        let sum: BigRational = weights.iter().cloned().sum();
        if !sum.is_positive() {
            return Err(Error::InvalidInput(
                "rational grid weights must have positive sum".into(),
            ));
        }
        let weights = weights.into_iter().map(|w| w / &sum).collect();
        RationalGridPrior::new(points, weights)
    }

    /// Convenience constructor from `(numerator, denominator)` pairs.
    pub fn from_ratios(points: &[(i64, i64)], weights: &[(i64, i64)]) -> Result<Self> {
        RationalGridPrior::new_normalized(
            points.iter().map(|&(n, d)| ratio(n, d)).collect(),
            weights.iter().map(|&(n, d)| ratio(n, d)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[BigRational] {
        &self.points
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    /// Nearest float representation, for sampling paths and cross-checks.
    pub fn to_float(&self) -> Result<GridPrior> {
        let points = self.points.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect();
        let weights = self.weights.iter().map(|w| w.to_f64().unwrap_or(f64::NAN)).collect();
        GridPrior::new_normalized(points, weights)
    }

    /// Exact moments `m_0..m_order`.
    pub fn moments(&self, order: usize) -> Vec<BigRational> {
        let mut powers: Vec<BigRational> = vec![BigRational::one(); self.points.len()];
        let mut out = Vec::with_capacity(order + 1);
        for k in 0..=order {
            if k > 0 {
                for (pw, p) in powers.iter_mut().zip(&self.points) {
                    *pw *= p;
                }
            }
            out.push(powers.iter().zip(&self.weights).map(|(pw, w)| pw * w).sum());
        }
        out
    }

    /// Exact one-step-ahead forecast after a prefix with the given counts:
    /// the posterior mean of the atom positions.
    pub fn forecast_counts(&self, ones: u64, len: u64) -> Result<BigRational> {
        debug_assert!(ones <= len);
        let zeros = len - ones;
        let mut norm = BigRational::zero();
        let mut mean = BigRational::zero();
        for (p, w) in self.points.iter().zip(&self.weights) {
            let lik = w * pow_rational(p, ones) * pow_rational(&(BigRational::one() - p), zeros);
            mean += &lik * p;
            norm += lik;
        }
        if norm.is_zero() {
            return Err(Error::ZeroMassHistory);
        }
        Ok(mean / norm)
    }

    /// Exact forecasts along `path`, one per period. Fails if some realized
    /// prefix (including the full path) has zero probability.
    pub fn forecast_trace(&self, path: &PartialRealization) -> Result<Vec<BigRational>> {
        let one = BigRational::one();
        let mut weights: Vec<BigRational> = self.weights.clone();
        let mut forecasts = Vec::with_capacity(path.len());
        for s in path.iter() {
            let norm: BigRational = weights.iter().cloned().sum();
            debug_assert!(!norm.is_zero(), "zero mass detected one step late");
            let mean: BigRational = weights.iter().zip(&self.points).map(|(w, p)| w * p).sum();
            forecasts.push(mean / &norm);
            for (w, p) in weights.iter_mut().zip(&self.points) {
                let factor = if s.is_one() { p.clone() } else { &one - p };
                *w *= factor;
            }
            if weights.iter().all(|w| w.is_zero()) {
                return Err(Error::ZeroMassHistory);
            }
        }
        Ok(forecasts)
    }
}

fn pow_rational(base: &BigRational, exp: u64) -> BigRational {
    if exp == 0 {
        return BigRational::one();
    }
    // Exponents stay small (bounded by the recovery order), so the naive
    // square-and-multiply is plenty.
    let mut result = BigRational::one();
    let mut base = base.clone();
    let mut exp = exp;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= &base;
        }
        exp >>= 1;
        if exp > 0 {
            let sq = &base * &base;
            base = sq;
        }
    }
    result
}

/// Exact dyadic-rational view of float forecasts: every finite `f64` is a
/// rational number, so float traces can be re-solved exactly.
pub fn rationalize_forecasts(forecasts: &[f64]) -> Result<Vec<BigRational>> {
    forecasts
        .iter()
        .map(|&p| {
            BigRational::from_float(p)
                .ok_or_else(|| Error::InvalidInput(format!("non-finite forecast {p}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_sum_to_exactly_one() {
        let points = vec![ratio(1, 4), ratio(3, 4)];
        let ok = RationalGridPrior::new(points.clone(), vec![ratio(1, 3), ratio(2, 3)]);
        assert!(ok.is_ok());
        let bad = RationalGridPrior::new(points, vec![ratio(1, 3), ratio(1, 3)]);
        assert!(bad.is_err());
    }

    #[test]
    fn moments_match_float_grid() {
        let prior = RationalGridPrior::from_ratios(&[(1, 5), (1, 2), (9, 10)], &[(1, 4), (1, 2), (1, 4)])
            .unwrap();
        let float = prior.to_float().unwrap();
        let exact = prior.moments(6);
        let approx = crate::theory::Prior::Grid(float).moments(6);
        for (e, a) in exact.iter().zip(&approx) {
            assert!((e.to_f64().unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_forecasts_match_float_forecasts() {
        let prior = RationalGridPrior::from_ratios(&[(1, 3), (2, 3)], &[(1, 2), (1, 2)]).unwrap();
        let float = crate::theory::Prior::Grid(prior.to_float().unwrap());
        let path: PartialRealization = "110100".parse().unwrap();
        let exact = prior.forecast_trace(&path).unwrap();
        for (n, e) in exact.iter().enumerate() {
            let f = float.forecast(&path.prefix(n)).unwrap();
            assert!((e.to_f64().unwrap() - f).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mass_path_is_rejected() {
        let prior = RationalGridPrior::from_ratios(&[(0, 1), (1, 1)], &[(1, 2), (1, 2)]).unwrap();
        let path: PartialRealization = "10".parse().unwrap();
        assert!(matches!(
            prior.forecast_trace(&path),
            Err(Error::ZeroMassHistory)
        ));
    }

    #[test]
    fn float_forecasts_are_exactly_rational() {
        let rs = rationalize_forecasts(&[0.5, 0.25, 1.0 / 3.0]).unwrap();
        assert_eq!(rs[0], ratio(1, 2));
        assert_eq!(rs[1], ratio(1, 4));
        // 1/3 is not dyadic; its float image is the nearest representable.
        assert!(rs[2] != ratio(1, 3));
        assert!((rs[2].to_f64().unwrap() - 1.0 / 3.0).abs() == 0.0);
    }
}
