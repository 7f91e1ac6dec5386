//! Config-driven, reproducible experiment orchestration.
//!
//! An experiment config is one JSON document naming a registered experiment,
//! a master seed, a replication count, and an experiment-specific parameter
//! block. Unknown keys are hard errors. Replication `r` always runs on the
//! derived seed `derive_seed(master_seed, r)`, so identical configs
//! byte-reproduce every stochastic output regardless of thread scheduling;
//! only the wall clock differs between runs.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::RationalGridPrior;
use crate::manipulation::{demonstrate_prop1, manipulation_curve, EvalMode, StrategyGrid};
use crate::merging::merging_gap;
use crate::recovery::recover_moments_exact;
use crate::testing::{composed_test_t_diagnostics, ComposedParams, TestSpec};
use crate::theory::{
    derive_seed, sample_realization, sample_realization_with_parameter, ForecastTrace, Prior,
};

/// Names in the experiment registry.
pub const EXPERIMENTS: [&str; 5] = [
    "informed-pass",
    "prop1-demo",
    "manipulation-curve",
    "merging",
    "recovery-roundtrip",
];

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Informed-pass experiment: the forecaster predicts with its own theory on
/// paths drawn from `truth`; the composed test should rarely reject.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InformedPassParams {
    pub horizon: usize,
    pub truth: Prior,
    pub forecaster: Prior,
    pub test: ComposedParams,
}

/// Finite-test manipulability demonstration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Params {
    pub test: TestSpec,
    pub experts: Vec<Prior>,
    pub truths: Vec<Prior>,
    /// Claimed acceptance slack; the measured diagonal must beat it.
    pub epsilon: f64,
    /// Monte Carlo trials per matrix entry; omit for exact enumeration.
    #[serde(default)]
    pub trials: Option<u64>,
}

/// Manipulation value of the composed test across horizons.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    pub test: ComposedParams,
    pub experts: Vec<Prior>,
    pub truths: Vec<Prior>,
    pub horizons: Vec<usize>,
    pub trials: u64,
    /// Bootstrap resamples for the value confidence interval.
    pub bootstrap: usize,
}

/// Forecast-merging measurement.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergingParams {
    pub learner: Prior,
    pub truth: Prior,
    pub horizons: Vec<usize>,
    pub trials: usize,
}

/// Moment-recovery round trip over random rational grid priors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundtripParams {
    /// Priors drawn per replication.
    pub priors: usize,
    pub max_atoms: usize,
    pub order: usize,
    pub horizon: usize,
    /// Float-lane error budget; the exact lane must be error-free.
    pub float_tol: f64,
}

/// Parsed and validated parameter block.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum ExperimentParams {
    InformedPass(InformedPassParams),
    Prop1Demo(Prop1Params),
    ManipulationCurve(CurveParams),
    Merging(MergingParams),
    RecoveryRoundtrip(RoundtripParams),
}

/// A fully validated experiment configuration.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub master_seed: u64,
    pub replications: usize,
    pub params: ExperimentParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    master_seed: u64,
    replications: usize,
    params: Value,
}

fn config_err(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| config_err("<config>", e))?;
        if raw.replications == 0 {
            return Err(config_err("replications", "must be at least 1"));
        }
        let params = match raw.experiment.as_str() {
            "informed-pass" => {
                let p: InformedPassParams = serde_json::from_value(raw.params)
                    .map_err(|e| config_err("params", e))?;
                p.test.validate().map_err(|e| config_err("params.test", e))?;
                if p.horizon < p.test.recovery_order {
                    return Err(config_err(
                        "params.horizon",
                        format!("must be at least the recovery order {}", p.test.recovery_order),
                    ));
                }
                ExperimentParams::InformedPass(p)
            }
            "prop1-demo" => {
                let p: Prop1Params = serde_json::from_value(raw.params)
                    .map_err(|e| config_err("params", e))?;
                p.test.validate().map_err(|e| config_err("params.test", e))?;
                if !(0.0..1.0).contains(&p.epsilon) {
                    return Err(config_err("params.epsilon", "must lie in [0,1)"));
                }
                StrategyGrid::new(p.experts.clone(), p.truths.clone())
                    .map_err(|e| config_err("params.experts", e))?;
                if p.trials == Some(0) {
                    return Err(config_err("params.trials", "must be positive when given"));
                }
                ExperimentParams::Prop1Demo(p)
            }
            "manipulation-curve" => {
                let p: CurveParams = serde_json::from_value(raw.params)
                    .map_err(|e| config_err("params", e))?;
                p.test.validate().map_err(|e| config_err("params.test", e))?;
                StrategyGrid::new(p.experts.clone(), p.truths.clone())
                    .map_err(|e| config_err("params.experts", e))?;
                if p.horizons.is_empty() || p.horizons.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_err(
                        "params.horizons",
                        "must be non-empty and strictly increasing",
                    ));
                }
                if p.horizons[0] < p.test.recovery_order {
                    return Err(config_err(
                        "params.horizons",
                        format!("first horizon is below the recovery order {}", p.test.recovery_order),
                    ));
                }
                if p.trials == 0 {
                    return Err(config_err("params.trials", "must be positive"));
                }
                ExperimentParams::ManipulationCurve(p)
            }
            "merging" => {
                let p: MergingParams = serde_json::from_value(raw.params)
                    .map_err(|e| config_err("params", e))?;
                if p.trials == 0 {
                    return Err(config_err("params.trials", "must be positive"));
                }
                if p.horizons.is_empty() || p.horizons.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_err(
                        "params.horizons",
                        "must be non-empty and strictly increasing",
                    ));
                }
                ExperimentParams::Merging(p)
            }
            "recovery-roundtrip" => {
                let p: RoundtripParams = serde_json::from_value(raw.params)
                    .map_err(|e| config_err("params", e))?;
                if p.priors == 0 || p.max_atoms == 0 {
                    return Err(config_err("params.priors", "counts must be positive"));
                }
                if p.order > p.horizon {
                    return Err(config_err(
                        "params.order",
                        format!("recovery order {} exceeds horizon {}", p.order, p.horizon),
                    ));
                }
                if !(p.float_tol > 0.0) {
                    return Err(config_err("params.float_tol", "must be positive"));
                }
                ExperimentParams::RecoveryRoundtrip(p)
            }
            other => {
                return Err(config_err(
                    "experiment",
                    format!("unknown experiment `{other}`; registry: {EXPERIMENTS:?}"),
                ));
            }
        };
        Ok(ExperimentConfig {
            experiment: raw.experiment,
            master_seed: raw.master_seed,
            replications: raw.replications,
            params,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Canonical JSON of the validated config (struct field order), the
    /// input to the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex-encoded.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        hex::encode(hasher.finalize())
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One replication's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub output: Value,
}

/// A full experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub replications: Vec<ReplicationRecord>,
    pub summary: Value,
    pub wall_clock_ms: u64,
    pub version: String,
}

/// Dispatches to the owning module and assembles the record. Replications
/// run in a work pool; results are ordered by replication index no matter
/// the completion order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..config.replications)
        .map(|r| derive_seed(config.master_seed, r as u64))
        .collect();

    let outputs: Vec<Result<Value>> = match &config.params {
        ExperimentParams::InformedPass(p) => seeds
            .par_iter()
            .map(|&seed| run_informed_pass(p, seed))
            .collect(),
        ExperimentParams::Prop1Demo(p) => seeds
            .par_iter()
            .map(|&seed| run_prop1(p, seed))
            .collect(),
        ExperimentParams::ManipulationCurve(p) => seeds
            .iter() // entries already parallelize internally
            .map(|&seed| run_curve(p, seed))
            .collect(),
        ExperimentParams::Merging(p) => seeds
            .iter() // trials already parallelize internally
            .map(|&seed| run_merging(p, seed))
            .collect(),
        ExperimentParams::RecoveryRoundtrip(p) => seeds
            .par_iter()
            .map(|&seed| run_roundtrip(p, seed))
            .collect(),
    };

    let mut replications = Vec::with_capacity(outputs.len());
    for (index, output) in outputs.into_iter().enumerate() {
        let output = output.map_err(|e| {
            Error::PreconditionFailed(format!("replication {index}: {e}"))
        })?;
        replications.push(ReplicationRecord {
            index,
            seed: seeds[index],
            output,
        });
    }
    let summary = summarize(&config.experiment, &replications);
    Ok(ResultRecord {
        experiment: config.experiment.clone(),
        config_hash: config.config_hash(),
        master_seed: config.master_seed,
        replications,
        summary,
        wall_clock_ms: start.elapsed().as_millis() as u64,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

fn run_informed_pass(p: &InformedPassParams, seed: u64) -> Result<Value> {
    let (q_star, path) = sample_realization_with_parameter(&p.truth, p.horizon, seed);
    let diag = match ForecastTrace::generate(&p.forecaster, &path) {
        Ok(trace) => composed_test_t_diagnostics(&trace, &p.test),
        Err(_) => {
            return Ok(json!({
                "verdict": "FAIL",
                "failed_stage": "zero_mass_path",
                "drawn_parameter": q_star,
            }));
        }
    };
    Ok(json!({
        "verdict": diag.verdict.to_string(),
        "failed_stage": diag.failed_stage,
        "q_hat": diag.q_hat,
        "region_length": diag.region_length,
        "moment_mismatch": diag.moment_mismatch,
        "drawn_parameter": q_star,
    }))
}

fn run_prop1(p: &Prop1Params, seed: u64) -> Result<Value> {
    let grid = StrategyGrid::new(p.experts.clone(), p.truths.clone())?;
    let mode = match p.trials {
        None => EvalMode::Exact,
        Some(trials) => EvalMode::MonteCarlo { trials, seed },
    };
    let report = demonstrate_prop1(&p.test, &grid, p.epsilon, &mode)?;
    Ok(serde_json::to_value(&report)?)
}

fn run_curve(p: &CurveParams, seed: u64) -> Result<Value> {
    let grid = StrategyGrid::new(p.experts.clone(), p.truths.clone())?;
    let points = manipulation_curve(&p.test, &grid, &p.horizons, p.trials, seed, p.bootstrap)?;
    Ok(json!({ "curve": points }))
}

fn run_merging(p: &MergingParams, seed: u64) -> Result<Value> {
    let report = merging_gap(&p.learner, &p.truth, &p.horizons, p.trials, seed)?;
    Ok(serde_json::to_value(&report)?)
}

fn run_roundtrip(p: &RoundtripParams, seed: u64) -> Result<Value> {
    use rand::SeedableRng;
    let mut max_float_error = 0.0_f64;
    let mut all_exact = true;
    for k in 0..p.priors {
        let prior_seed = derive_seed(seed, k as u64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(prior_seed);
        let rational = random_rational_prior(&mut rng, p.max_atoms);
        let float = Prior::Grid(rational.to_float()?);
        let path = sample_realization(&float, p.horizon, derive_seed(prior_seed, 1));

        // Exact lane: bit-exact round trip or bust.
        let exact_forecasts = rational.forecast_trace(&path)?;
        let recovered = recover_moments_exact(&exact_forecasts, &path, p.order)?;
        if recovered != rational.moments(p.order) {
            all_exact = false;
        }

        // Float lane: worst absolute moment error across the batch.
        let trace = ForecastTrace::generate(&float, &path)?;
        let err = crate::recovery::roundtrip_error(&trace, &float, p.order)?;
        max_float_error = max_float_error.max(err);
    }
    Ok(json!({
        "priors": p.priors,
        "max_float_error": max_float_error,
        "exact_ok": all_exact,
        "float_within_tol": max_float_error <= p.float_tol,
    }))
}

/// Random rational grid prior: distinct small-denominator atoms in [0,1]
/// with positive rational weights normalized to one.
pub fn random_rational_prior<R: rand::Rng>(rng: &mut R, max_atoms: usize) -> RationalGridPrior {
    let atoms = 1 + rng.random_range(0..max_atoms);
    let denom: i64 = 16 + rng.random_range(0..49) as i64;
    let mut numerators = std::collections::BTreeSet::new();
    while numerators.len() < atoms {
        numerators.insert(rng.random_range(0..=denom));
    }
    let points: Vec<(i64, i64)> = numerators.into_iter().map(|n| (n, denom)).collect();
    let weights: Vec<(i64, i64)> = (0..atoms)
        .map(|_| (1 + rng.random_range(0..9) as i64, 1))
        .collect();
    RationalGridPrior::from_ratios(&points, &weights).expect("constructed valid")
}

fn summarize(experiment: &str, replications: &[ReplicationRecord]) -> Value {
    match experiment {
        "informed-pass" => {
            let passes = replications
                .iter()
                .filter(|r| r.output["verdict"] == "PASS")
                .count();
            json!({
                "pass_rate": passes as f64 / replications.len() as f64,
                "replications": replications.len(),
            })
        }
        "prop1-demo" => {
            let min_value = replications
                .iter()
                .filter_map(|r| r.output["value"].as_f64())
                .fold(f64::INFINITY, f64::min);
            let all_bounds = replications
                .iter()
                .all(|r| r.output["bound_satisfied"] == true);
            json!({ "min_value": min_value, "all_bounds_satisfied": all_bounds })
        }
        "manipulation-curve" => {
            let non_increasing = replications.iter().all(|r| {
                r.output["curve"]
                    .as_array()
                    .map(|pts| {
                        pts.windows(2).all(|w| {
                            w[1]["value"].as_f64() <= w[0]["value"].as_f64()
                        })
                    })
                    .unwrap_or(false)
            });
            json!({ "non_increasing": non_increasing })
        }
        "merging" => {
            let worst_final = replications
                .iter()
                .filter_map(|r| {
                    r.output["mean_abs_gap"]
                        .as_array()
                        .and_then(|g| g.last())
                        .and_then(Value::as_f64)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            json!({ "worst_final_mean_gap": worst_final })
        }
        "recovery-roundtrip" => {
            let max_err = replications
                .iter()
                .filter_map(|r| r.output["max_float_error"].as_f64())
                .fold(0.0_f64, f64::max);
            let all_exact = replications.iter().all(|r| r.output["exact_ok"] == true);
            json!({ "max_float_error": max_err, "all_exact_ok": all_exact })
        }
        _ => Value::Null,
    }
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Output formats for [`emit_results`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for EmitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "jsonl" => Ok(EmitFormat::Jsonl),
            other => Err(Error::InvalidParams(format!(
                "unknown format `{other}` (expected csv or jsonl)"
            ))),
        }
    }
}

/// Floats in emitted files carry 17 significant digits, enough to re-parse
/// to the identical bit pattern.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON serializer whose f64s carry 17 significant digits.
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: std::io::Write + ?Sized>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes one value as a JSON line with full float precision.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

/// Writes the record to `path`: as CSV rows of the experiment's tabular
/// series, or as one JSON-lines record per replication.
pub fn emit_results(record: &ResultRecord, format: EmitFormat, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    match format {
        EmitFormat::Csv => file.write_all(csv_string(record)?.as_bytes())?,
        EmitFormat::Jsonl => {
            for rep in &record.replications {
                let line = to_json_line(&json!({
                    "experiment": record.experiment,
                    "config_hash": record.config_hash,
                    "replication": rep,
                }))?;
                file.write_all(line.as_bytes())?;
                file.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// The CSV view of a record. Curves and merging reports become per-horizon
/// series; scalar experiments become one row per replication.
pub fn csv_string(record: &ResultRecord) -> Result<String> {
    let mut out = String::new();
    let f = |v: &Value| -> String {
        match v.as_f64() {
            Some(x) => fmt_float(x),
            None => v.to_string().trim_matches('"').to_string(),
        }
    };
    match record.experiment.as_str() {
        "manipulation-curve" => {
            out.push_str("horizon,value,ci_lo,ci_hi\n");
            for rep in &record.replications {
                for pt in rep.output["curve"].as_array().into_iter().flatten() {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        pt["horizon"],
                        f(&pt["value"]),
                        f(&pt["ci_lo"]),
                        f(&pt["ci_hi"])
                    ));
                }
            }
        }
        "merging" => {
            out.push_str("horizon,mean_gap,q90,q99\n");
            for rep in &record.replications {
                let horizons = rep.output["horizons"].as_array().cloned().unwrap_or_default();
                for (i, h) in horizons.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        h,
                        f(&rep.output["mean_abs_gap"][i]),
                        f(&rep.output["q90_gap"][i]),
                        f(&rep.output["q99_gap"][i])
                    ));
                }
            }
        }
        "informed-pass" => {
            out.push_str("replication,seed,verdict,q_hat,region_length,moment_mismatch\n");
            for rep in &record.replications {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    rep.index,
                    rep.seed,
                    f(&rep.output["verdict"]),
                    f(&rep.output["q_hat"]),
                    f(&rep.output["region_length"]),
                    f(&rep.output["moment_mismatch"])
                ));
            }
        }
        "prop1-demo" => {
            out.push_str("replication,value,epsilon_measured,duality_gap,worst_truth_index,bound_satisfied\n");
            for rep in &record.replications {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    rep.index,
                    f(&rep.output["value"]),
                    f(&rep.output["epsilon_measured"]),
                    f(&rep.output["duality_gap"]),
                    rep.output["worst_truth_index"],
                    rep.output["bound_satisfied"]
                ));
            }
        }
        "recovery-roundtrip" => {
            out.push_str("replication,max_float_error,exact_ok,float_within_tol\n");
            for rep in &record.replications {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    rep.index,
                    f(&rep.output["max_float_error"]),
                    rep.output["exact_ok"],
                    rep.output["float_within_tol"]
                ));
            }
        }
        other => {
            return Err(Error::InvalidParams(format!(
                "no CSV view for experiment `{other}`"
            )));
        }
    }
    Ok(out)
}
