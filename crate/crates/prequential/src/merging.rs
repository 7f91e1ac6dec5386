//! Forecast merging: how fast a Bayesian learner's one-step-ahead forecasts
//! approach the truth's forecasts along paths drawn from the truth.
//!
//! With binary outcomes the total-variation distance between two one-step
//! forecasts is exactly the absolute difference of their probabilities of a
//! one, so that is the gap recorded. Almost-sure convergence is not finitely
//! checkable; the report aggregates the gap's mean and upper quantiles over
//! sampled paths at a ladder of horizons instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theory::{derive_seed, sample_realization, Prior, SequentialForecaster};

/// Per-horizon summary of |learner forecast - truth forecast| over trials.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MergingReport {
    pub horizons: Vec<usize>,
    pub mean_abs_gap: Vec<f64>,
    pub q90_gap: Vec<f64>,
    pub q99_gap: Vec<f64>,
    pub trials: usize,
}

impl MergingReport {
    /// The row for a horizon, as `(horizon, mean, q90, q99)`.
    pub fn row(&self, idx: usize) -> (usize, f64, f64, f64) {
        (
            self.horizons[idx],
            self.mean_abs_gap[idx],
            self.q90_gap[idx],
            self.q99_gap[idx],
        )
    }
}

/// Samples `trials` paths from `truth` and records the forecast gap of
/// `learner` against `truth` at every horizon in `horizons` (the forecast
/// made after observing that many outcomes). Errors with
/// [`Error::ZeroMassHistory`] if the learner assigns zero probability to a
/// sampled prefix.
pub fn merging_gap(
    learner: &Prior,
    truth: &Prior,
    horizons: &[usize],
    trials: usize,
    seed: u64,
) -> Result<MergingReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("merging needs at least one trial".into()));
    }
    if horizons.is_empty() {
        return Err(Error::InvalidParams("merging needs at least one horizon".into()));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("horizons must be strictly increasing".into()));
    }
    let max_horizon = *horizons.last().expect("non-empty");

    // gaps[t] holds one gap per checkpoint horizon for trial t.
    let gaps: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let path = sample_realization(truth, max_horizon, derive_seed(seed, t as u64));
            let mut learner_state = SequentialForecaster::new(learner);
            let mut truth_state = SequentialForecaster::new(truth);
            let mut out = Vec::with_capacity(horizons.len());
            let mut next_checkpoint = 0;
            for n in 0..=max_horizon {
                if next_checkpoint < horizons.len() && horizons[next_checkpoint] == n {
                    let p_learner = learner_state.forecast()?;
                    let p_truth = truth_state.forecast().expect(
                        "truth forecasts are defined along its own sampled paths",
                    );
                    out.push((p_learner - p_truth).abs());
                    next_checkpoint += 1;
                }
                if n < max_horizon {
                    let s = path.get(n).expect("n < path length");
                    learner_state.observe(s).map_err(|_| Error::ZeroMassHistory)?;
                    truth_state
                        .observe(s)
                        .expect("truth supports its own sampled paths");
                }
            }
            Ok(out)
        })
        .collect();

    let mut per_horizon: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); horizons.len()];
    for trial in gaps {
        let trial = trial?;
        for (h, g) in trial.into_iter().enumerate() {
            per_horizon[h].push(g);
        }
    }

    let mut mean_abs_gap = Vec::with_capacity(horizons.len());
    let mut q90_gap = Vec::with_capacity(horizons.len());
    let mut q99_gap = Vec::with_capacity(horizons.len());
    for series in per_horizon.iter_mut() {
        mean_abs_gap.push(series.iter().sum::<f64>() / trials as f64);
        series.sort_by(f64::total_cmp);
        q90_gap.push(quantile_sorted(series, 0.90));
        q99_gap.push(quantile_sorted(series, 0.99));
    }
    Ok(MergingReport {
        horizons: horizons.to_vec(),
        mean_abs_gap,
        q90_gap,
        q99_gap,
        trials,
    })
}

/// Upper empirical quantile of a sorted sample: the smallest order statistic
/// whose rank is at least `level * n`.
fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}
