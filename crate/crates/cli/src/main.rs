//! `lambtune` — batch front end for the resonator toolkit.
//!
//! Every command reads a JSON config, writes plot-ready CSV/JSON artifacts
//! into an output directory, and prints a one-line human summary on stdout.
//! Failures emit a machine-readable JSON object on stderr and a meaningful
//! exit code: 1 for usage/config problems, 2 for unparseable input data,
//! 3 when a fit finishes without converging (its report is still written).

mod commands;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use commands::{CliError, Grid, OutputFormat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lambtune",
    version,
    about = "Simulate, sweep, fit, and ingest lateral-field resonator data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an admittance trace from a circuit or device config
    Simulate(SimulateArgs),
    /// Run a DC-bias sweep: trends, turning voltage, tunability
    Sweep(SweepArgs),
    /// Fit an equivalent circuit to a response CSV or Touchstone file
    Fit(FitArgs),
    /// Convert Touchstone files to admittance CSVs with diagnostics
    Ingest(IngestArgs),
    /// Trace the fundamental symmetric-mode dispersion branch
    Dispersion(DispersionArgs),
    /// Rank fitted results against the reference resonator table
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config with the circuit model (or device section) and grid
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for noise injection
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the config grid: start,stop,n (Hz)
    #[arg(long, value_parser = commands::parse_grid)]
    grid: Option<Grid>,
    /// Primary data artifact format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config with the base circuit, bias laws, and voltage range
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Primary data artifact format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct FitArgs {
    /// JSON config naming the input response and branch count
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the number of branches to fit
    #[arg(long)]
    branches: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    /// Touchstone v1 files (.s1p/.s2p); shell globs welcome
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Primary data artifact format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct DispersionArgs {
    /// JSON config with the layer stack and fd grid
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON config naming the fit report and reference table
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::cmd_simulate(&a.config, &a.out, a.seed, a.grid, a.format),
        Command::Sweep(a) => commands::cmd_sweep(&a.config, &a.out, a.format),
        Command::Fit(a) => commands::cmd_fit(&a.config, &a.out, a.branches),
        Command::Ingest(a) => commands::cmd_ingest(&a.inputs, &a.out, a.format),
        Command::Dispersion(a) => commands::cmd_dispersion(&a.config, &a.out),
        Command::Compare(a) => commands::cmd_compare(&a.config, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
