//! `rateex`: rate-exponent regions, bounds and simulations from the command line.

// `!(x >= 0.0)` is deliberate: it rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{error::ErrorKind, Parser, Subcommand};
use serde_json::json;

use commands::*;
use io::{ArgumentError, SchemaError};

#[derive(Parser, Debug)]
#[command(name = "rateex", version, about = "Rate-exponent regions for distributed hypothesis testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exponent of a Gaussian vector model at given rates (JSON report).
    VgRegion(VgRegionArgs),
    /// Scalar Gaussian sensors with independent noise (CSV).
    ScalarRegion(ScalarRegionArgs),
    /// Grid-searched exponent of a discrete model (JSON report).
    DmRegion(DmRegionArgs),
    /// Monte Carlo quantize-bin-test run (JSON).
    QbtSim(QbtSimArgs),
    /// Exact Neyman-Pearson Type-II error or exponent curve.
    NpOracle(NpOracleArgs),
    /// Entropy-power bounds for a non-Gaussian scalar source (JSON).
    EpBounds(EpBoundsArgs),
    /// Sum-rate gap over sensor counts and exponents (CSV).
    GapCurve(GapCurveArgs),
}

impl Command {
    fn output(&self) -> Option<&PathBuf> {
        match self {
            Command::VgRegion(a) => a.output.as_ref(),
            Command::ScalarRegion(a) => a.output.as_ref(),
            Command::DmRegion(a) => a.output.as_ref(),
            Command::QbtSim(a) => a.output.as_ref(),
            Command::NpOracle(a) => a.output.as_ref(),
            Command::EpBounds(a) => a.output.as_ref(),
            Command::GapCurve(a) => a.output.as_ref(),
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("RATEEX_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| io::arg_error(format!("RATEEX_THREADS = `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| io::arg_error(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let content = match &cli.command {
        Command::VgRegion(a) => vg_region(a)?,
        Command::ScalarRegion(a) => scalar_region(a)?,
        Command::DmRegion(a) => dm_region(a)?,
        Command::QbtSim(a) => qbt_sim(a)?,
        Command::NpOracle(a) => np_oracle(a)?,
        Command::EpBounds(a) => ep_bounds(a)?,
        Command::GapCurve(a) => {
            let (csv, warnings) = gap_curve_csv(a)?;
            for w in warnings {
                eprintln!("{}", json!({ "warning": w }));
            }
            csv
        }
    };
    io::emit(cli.command.output(), &content)
}

/// Exit status and error class for a failure.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.is::<ArgumentError>() {
            return (2, "argument");
        }
        if cause.is::<SchemaError>() {
            return (3, "validation");
        }
        if let Some(e) = cause.downcast_ref::<rateex_core::Error>() {
            return if e.is_numerical() { (4, "numerical") } else { (3, "validation") };
        }
    }
    (2, "argument")
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "exit_code": code, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            return fail(2, "argument", text.trim().trim_start_matches("error: ").to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            fail(code, kind, format!("{e:#}"))
        }
    }
}
