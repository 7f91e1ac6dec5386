//! `lab` — command-line front end for the prequential testing laboratory.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 1 on
//! runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prequential::harness::{
    emit_results, run_experiment, to_json_line, EmitFormat, ExperimentConfig, ResultRecord,
};
use prequential::recovery::{
    hausdorff_check, recover_moments, recover_path_probs, reconstruct_prior,
    QUADRATURE_SOURCE_TOL,
};
use prequential::testing::{composed_test_t_diagnostics, TestKind, TestSpec};
use prequential::theory::{
    empirical_mean, sample_realization_with_parameter, ForecastTrace, Prior,
};
use prequential::Error;

#[derive(Parser)]
#[command(name = "lab", version, about = "Prequential testing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any registered experiment from a config file.
    Run {
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Base path for output files (writes BASE.csv / BASE.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format: csv, jsonl, or both.
        #[arg(long, default_value = "both")]
        format: String,
    },
    /// Sample a realization from a prior and record a forecaster's trace.
    Simulate {
        /// Truth prior: inline JSON or @path to a JSON file.
        #[arg(long)]
        prior: String,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Forecaster prior (defaults to the truth: an informed expert).
        #[arg(long)]
        forecaster: Option<String>,
        /// Where to write the trace JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover moments and a grid prior from a trace file.
    Recover {
        trace: PathBuf,
        #[arg(long, default_value_t = prequential::recovery::DEFAULT_RECOVERY_ORDER)]
        order: usize,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 101)]
        grid_size: usize,
    },
    /// Evaluate a test spec on a trace.
    Test { trace: PathBuf, spec: PathBuf },
    /// Run a manipulation experiment (prop1-demo or manipulation-curve).
    Manipulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "both")]
        format: String,
    },
    /// Run a merging experiment.
    Merge {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "both")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, seed, out, format } => {
            run_config(&config, seed, out.as_deref(), &format, None)
        }
        Command::Manipulate { config, seed, out, format } => run_config(
            &config,
            seed,
            out.as_deref(),
            &format,
            Some(&["manipulation-curve", "prop1-demo"]),
        ),
        Command::Merge { config, seed, out, format } => {
            run_config(&config, seed, out.as_deref(), &format, Some(&["merging"]))
        }
        Command::Simulate { prior, horizon, seed, forecaster, out } => {
            simulate(&prior, horizon, seed, forecaster.as_deref(), out.as_deref())
        }
        Command::Recover { trace, order, tol, grid_size } => {
            recover(&trace, order, tol, grid_size)
        }
        Command::Test { trace, spec } => test_trace(&trace, &spec),
    }
}

fn run_config(
    path: &Path,
    seed_override: Option<u64>,
    out: Option<&Path>,
    format: &str,
    allowed: Option<&[&str]>,
) -> Result<(), Error> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = seed_override {
        config.master_seed = seed;
    }
    if let Some(allowed) = allowed {
        if !allowed.contains(&config.experiment.as_str()) {
            return Err(Error::Config {
                field: "experiment".into(),
                message: format!(
                    "this subcommand runs {allowed:?}, config says `{}`",
                    config.experiment
                ),
            });
        }
    }
    let record = run_experiment(&config)?;
    match out {
        None => println!("{}", to_json_line(&record)?),
        Some(base) => {
            let targets: &[EmitFormat] = match format {
                "both" => &[EmitFormat::Csv, EmitFormat::Jsonl],
                other => &[other.parse::<EmitFormat>()?][..],
            };
            for &fmt in targets {
                let ext = if fmt == EmitFormat::Csv { "csv" } else { "jsonl" };
                let target = base.with_extension(ext);
                emit_results(&record, fmt, &target)?;
                eprintln!("wrote {}", target.display());
            }
            println!("{}", summary_line(&record)?);
        }
    }
    Ok(())
}

fn summary_line(record: &ResultRecord) -> Result<String, Error> {
    to_json_line(&serde_json::json!({
        "experiment": record.experiment,
        "config_hash": record.config_hash,
        "replications": record.replications.len(),
        "summary": record.summary,
        "wall_clock_ms": record.wall_clock_ms,
    }))
}

/// Inline JSON, or the contents of a file when prefixed with `@`.
fn load_json_arg(arg: &str) -> Result<String, Error> {
    if let Some(path) = arg.strip_prefix('@') {
        Ok(std::fs::read_to_string(path)?)
    } else {
        Ok(arg.to_string())
    }
}

fn parse_prior(arg: &str) -> Result<Prior, Error> {
    let text = load_json_arg(arg)?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        field: "prior".into(),
        message: e.to_string(),
    })
}

fn simulate(
    prior_arg: &str,
    horizon: usize,
    seed: u64,
    forecaster_arg: Option<&str>,
    out: Option<&Path>,
) -> Result<(), Error> {
    let truth = parse_prior(prior_arg)?;
    let forecaster = match forecaster_arg {
        Some(arg) => parse_prior(arg)?,
        None => truth.clone(),
    };
    let (q, path) = sample_realization_with_parameter(&truth, horizon, seed);
    let trace = ForecastTrace::generate(&forecaster, &path)?;
    let trace_json = to_json_line(&trace)?;
    match out {
        Some(target) => {
            std::fs::write(target, trace_json + "\n")?;
            eprintln!("wrote {}", target.display());
        }
        None => println!("{trace_json}"),
    }
    eprintln!(
        "{}",
        to_json_line(&serde_json::json!({
            "drawn_parameter": q,
            "horizon": horizon,
            "empirical_mean": empirical_mean(&path).ok(),
            "seed": seed,
        }))?
    );
    Ok(())
}

fn load_trace(path: &Path) -> Result<ForecastTrace, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        field: "trace".into(),
        message: e.to_string(),
    })
}

fn recover(path: &Path, order: usize, tol: Option<f64>, grid_size: usize) -> Result<(), Error> {
    let trace = load_trace(path)?;
    let order = order.min(trace.horizon());
    let tol = tol.unwrap_or(QUADRATURE_SOURCE_TOL);
    let probs = recover_path_probs(&trace);
    let mut report = serde_json::json!({
        "horizon": trace.horizon(),
        "order": order,
        "path_probabilities": probs.as_slice().iter().take(order + 1).collect::<Vec<_>>(),
    });
    match recover_moments(&trace, order, tol) {
        Err(e) => {
            report["error"] = serde_json::json!(e.to_string());
        }
        Ok(moments) => {
            report["moments"] = serde_json::to_value(moments.as_slice())?;
            report["hausdorff_ok"] = serde_json::json!(hausdorff_check(&moments, 1e-9));
            match reconstruct_prior(&moments, grid_size, 1e-6) {
                Ok(rec) => {
                    let support: Vec<(f64, f64)> =
                        rec.prior.atoms().filter(|&(_, w)| w > 0.0).collect();
                    report["reconstruction"] = serde_json::json!({
                        "moment_mismatch": rec.moment_mismatch,
                        "support": support,
                    });
                }
                Err(e) => {
                    report["reconstruction_error"] = serde_json::json!(e.to_string());
                }
            }
        }
    }
    println!("{}", to_json_line(&report)?);
    Ok(())
}

fn test_trace(trace_path: &Path, spec_path: &Path) -> Result<(), Error> {
    let trace = load_trace(trace_path)?;
    let text = std::fs::read_to_string(spec_path)?;
    let spec: TestSpec = serde_json::from_str(&text).map_err(|e| Error::Config {
        field: "spec".into(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    let verdict = spec.evaluate(&trace);
    let mut report = serde_json::json!({
        "verdict": verdict.to_string(),
        "horizon": spec.horizon.min(trace.horizon()),
    });
    if let TestKind::ComposedT(params) = &spec.test {
        let truncated = trace.truncated(spec.horizon);
        let diag = composed_test_t_diagnostics(&truncated, params);
        report["diagnostics"] = serde_json::to_value(&diag)?;
    }
    println!("{}", to_json_line(&report)?);
    Ok(())
}
