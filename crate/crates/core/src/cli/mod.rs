//! Command-line front end: TOML experiment configs, run records, CSV tables
//! and gnuplot scripts.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure (divergence,
//! non-convergence, non-finite values), 4 failed assertion.

mod commands;
mod config;
mod record;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{effective_config, execute, replay, Command, Overrides, RunOutcome};
pub use config::{
    CoefficientSection, Config, ExperimentSection, GridSection, KernelSection, MeasureSection, OutputSection, Scalar,
    KINDS,
};
pub use record::{sha256_hex, version_string, ManifestEntry, RunRecord, RECORD_FILE};

use crate::error::{Error, Result};
use crate::expr::Expression;

/// Parses a coefficient expression in `t`, `u` and `x1..x3`.
pub fn parse_coefficient(source: &str) -> Result<Expression> {
    Expression::coefficient(source, 3)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. }
        | Error::Divergent(_)
        | Error::NonFinite(_)
        | Error::ExponentUndetermined { .. }
        | Error::SingularPoint { .. } => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::SingularPoint { .. } => "singular_point",
        Error::Divergent(_) => "divergent",
        Error::ExponentUndetermined { .. } => "exponent_undetermined",
        Error::MeasureUnsupportedOnGrid { .. } => "measure_unsupported_on_grid",
        Error::NotConverged { .. } => "not_converged",
        Error::GridMismatch(_) => "grid_mismatch",
        Error::NonFinite(_) => "non_finite",
        Error::MixedProvenance(_) => "mixed_provenance",
        Error::Parse { .. } => "parse",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
    }
}

#[derive(Parser, Debug)]
#[command(name = "spdelab", version, about = "Stochastic heat and wave equation lab")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Errors and warnings as JSON on stderr.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the experiment named in `[experiment] kind`.
    Run(Common),
    /// Check (A_eta) and estimate the exponents delta1, delta2.
    Assumptions(Common),
    /// Compare empirical and analytic noise covariances.
    NoiseCheck(Common),
    /// Solve one trajectory.
    Solve(Common),
    /// Picard convergence diagnostics.
    Picard(Common),
    /// Coefficient, parameter or noise stability.
    Stability(Common),
    /// Hölder exponents of one trajectory.
    Holder(Common),
    /// Rerun a run record and compare its metric tables.
    Replay {
        record: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

/// Caps the global rayon pool at `SPDELAB_THREADS` workers.
pub fn configure_threads() {
    if let Some(n) = std::env::var("SPDELAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn report_error(e: &Error, json: bool) -> i32 {
    let code = exit_code(e);
    if json {
        let v = serde_json::json!({ "error": error_kind(e), "message": e.to_string(), "exit_code": code });
        eprintln!("{v}");
    } else {
        eprintln!("error: {e}");
    }
    code
}

fn report_warnings(warnings: &[String], json: bool) {
    for w in warnings {
        if json {
            eprintln!("{}", serde_json::json!({ "warning": w }));
        } else {
            eprintln!("warning: {w}");
        }
    }
}

fn finish(outcome: &RunOutcome, json: bool) -> i32 {
    for l in &outcome.lines {
        println!("{l}");
    }
    let code = outcome.record.exit_code;
    if let Some(m) = &outcome.message {
        if json {
            eprintln!(
                "{}",
                serde_json::json!({ "error": if code == EXIT_ASSERTION { "assertion" } else { "numerical" }, "message": m, "exit_code": code })
            );
        } else {
            eprintln!("error: {m}");
        }
    }
    code
}

fn run_common(command: Command, c: &Common) -> i32 {
    let overrides = Overrides {
        seed: c.seed,
        replicas: c.replicas,
        out_dir: c.out_dir.clone(),
    };
    let cfg = match Config::load(&c.config).and_then(|cfg| effective_config(command, cfg, &overrides)) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(&e, c.json),
    };
    report_warnings(&cfg.warnings(), c.json);
    match execute(command, &cfg) {
        Ok(outcome) => finish(&outcome, c.json),
        Err(e) => report_error(&e, c.json),
    }
}

fn run_replay(path: &Path, out_dir: Option<&PathBuf>, json: bool) -> i32 {
    let record = match RunRecord::read(path) {
        Ok(r) => r,
        Err(e) => return report_error(&e, json),
    };
    let dir = out_dir.cloned().unwrap_or_else(|| {
        path.parent()
            .map_or_else(|| PathBuf::from("replay"), |p| p.join("replay"))
    });
    match replay(&record, &dir) {
        Ok((outcome, differ)) => {
            for l in &outcome.lines {
                println!("{l}");
            }
            let tables = record.metric_tables().count();
            if differ.is_empty() {
                println!("replay identical: {tables} metric tables");
                EXIT_OK
            } else {
                let msg = format!("replay differs in {}", differ.join(", "));
                if json {
                    eprintln!("{}", serde_json::json!({ "error": "replay_mismatch", "message": msg, "exit_code": EXIT_ASSERTION }));
                } else {
                    eprintln!("error: {msg}");
                }
                EXIT_ASSERTION
            }
        }
        Err(e) => report_error(&e, json),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    configure_threads();
    match &cli.command {
        Cmd::Run(c) => run_common(Command::Run, c),
        Cmd::Assumptions(c) => run_common(Command::Assumptions, c),
        Cmd::NoiseCheck(c) => run_common(Command::NoiseCheck, c),
        Cmd::Solve(c) => run_common(Command::Solve, c),
        Cmd::Picard(c) => run_common(Command::Picard, c),
        Cmd::Stability(c) => run_common(Command::Stability, c),
        Cmd::Holder(c) => run_common(Command::Holder, c),
        Cmd::Replay { record, out_dir, json } => run_replay(record, out_dir.as_ref(), *json),
    }
}
