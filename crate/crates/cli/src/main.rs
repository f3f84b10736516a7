//! `dsrank`: command-line front end for the stress-testing engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsrank::AdmissionPolicy;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(dsrank::Error),
}

impl From<dsrank::Error> for CliError {
    fn from(e: dsrank::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(dsrank::Error::InvalidInput(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "dsrank", version, about = "Interbank stress testing with joint credit and funding shocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a balance-sheet file and print the admission report.
    Validate(ValidateArgs),
    /// Generate synthetic markets matching published aggregates.
    Synth(RunArgs),
    /// Sample exposure networks and write them as triplet CSVs.
    Reconstruct(RunArgs),
    /// Sweep group shocks over a ψ grid.
    GroupShock(RunArgs),
    /// Default every bank in turn; write impact and vulnerability.
    IndividualShock(RunArgs),
    /// Original and extended interbank leverage.
    Leverage(RunArgs),
    /// Render SVG figures from result CSVs.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    MarkDefaulted,
    Drop,
}

impl From<Policy> for AdmissionPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::MarkDefaulted => AdmissionPolicy::MarkDefaulted,
            Policy::Drop => AdmissionPolicy::Drop,
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    year: Option<i32>,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
}

#[derive(Args)]
pub struct RunArgs {
    /// Scenario config, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Balance-sheet CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Use synthetic markets calibrated to the published aggregates.
    #[arg(long)]
    synth: bool,
    /// Log-normal shape of the synthetic marginals.
    #[arg(long)]
    synth_shape: Option<f64>,
    #[arg(long = "years", alias = "year", value_delimiter = ',')]
    years: Vec<i32>,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Master seed (falls back to the config, then DSRANK_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `<λ>`, `beta` (empirical law) or `beta:<α>,<β>`.
    #[arg(long)]
    lgd: Option<String>,
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// `once`, `persistent` or `exp:<τ>`; repeatable.
    #[arg(long)]
    damping: Vec<String>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    gamma_cap: Option<f64>,
    #[arg(long)]
    psi_min: Option<f64>,
    #[arg(long)]
    psi_max: Option<f64>,
    #[arg(long)]
    psi_count: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into an existing non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also dump full trajectories of ensemble member 0.
    #[arg(long)]
    full_trajectory: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV; renders year × ψ heatmaps.
    #[arg(long, conflicts_with = "profiles", required_unless_present = "profiles")]
    results: Option<PathBuf>,
    /// Profiles CSV; renders the impact/vulnerability scatter.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// SVG file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Validate(a) => commands::validate(a.config, a.input, a.year, a.policy.map(Into::into)),
        Command::Synth(a) => commands::run(commands::Task::Synth, a),
        Command::Reconstruct(a) => commands::run(commands::Task::Reconstruct, a),
        Command::GroupShock(a) => commands::run(commands::Task::Group, a),
        Command::IndividualShock(a) => commands::run(commands::Task::Individual, a),
        Command::Leverage(a) => commands::run(commands::Task::Leverage, a),
        Command::Plot(a) => commands::plot(a.results, a.profiles, a.out, a.force),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
