//! A laboratory for prequential testing of probabilistic forecasters on
//! binary exchangeable processes.
//!
//! The pipeline, end to end:
//!
//! 1. [`theory`] represents exchangeable theories as parameter priors over
//!    the coin bias and computes path probabilities, sequential forecasts,
//!    and sampled realizations.
//! 2. [`recovery`] reads a forecaster's prior back out of a single forecast
//!    trace: path probabilities by induction, moments by a triangular solve,
//!    a complete-monotonicity validity check, and grid reconstruction.
//! 3. [`testing`] houses the prequential test abstraction: the composed test
//!    built on recovery plus a one-shot parameter test, and baseline finite
//!    tests (frequency, calibration, likelihood).
//! 4. [`manipulation`] builds and solves the zero-sum game between a
//!    strategic expert and Nature, measuring how manipulable a test is.
//! 5. [`merging`] measures how fast a uniform-prior Bayesian learner's
//!    forecasts approach the truth's forecasts.
//! 6. [`harness`] runs reproducible, config-driven experiments over all of
//!    the above and emits CSV/JSON-lines records.

pub mod error;
pub mod exact;
pub mod harness;
pub mod manipulation;
pub mod merging;
pub mod recovery;
pub mod testing;
pub mod theory;

mod linalg;
mod simplex;

pub use error::{Error, Result};
