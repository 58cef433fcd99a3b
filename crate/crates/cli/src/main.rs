//! `covsteer <command> --config <path> [--out <dir>] [--seed <u64>] [--paths <N>] [--grid <N>]`

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] covsteer::Error),
    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use covsteer::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Mismatch(_) => 4,
            CliError::Core(e) => match e {
                E::DimensionMismatch(_)
                | E::InvalidArgument(_)
                | E::StepSize(_)
                | E::NoiseInconsistency(_)
                | E::MissingCheckpoint(_)
                | E::PathsNotRetained => 1,
                E::Precondition(_)
                | E::NotControllable(_)
                | E::ChannelMismatch(_)
                | E::RiccatiNonexistence(_)
                | E::Infeasible(_) => 2,
                E::NoConvergence { .. } | E::IntegrationFailure { .. } | E::Singular { .. } => 3,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check the standing assumptions on the validation grid.
    Validate,
    /// Rank profile and controllability notions of (A, B).
    Classify,
    /// Solve the boundary problem and emit the optimal gain schedule.
    Solve,
    /// Build an explicit feasible steering for constant (A, B).
    Construct,
    /// Monte Carlo simulation of the closed loop.
    Simulate,
    /// Solve, simulate, and compare.
    Certify,
}

#[derive(Debug, Parser)]
#[command(name = "covsteer", version, about = "Optimal covariance steering for linear stochastic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    grid: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.options.seed = s;
    }
    if let Some(n) = cli.paths {
        cfg.options.num_paths = n;
    }
    if let Some(g) = cli.grid {
        cfg.options.grid = g;
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.options.output_dir));
    if cfg.options.grid < 2 {
        return Err(CliError::Config("grid must be at least 2".into()));
    }
    if cfg.options.num_paths == 0 {
        return Err(CliError::Config("numPaths must be at least 1".into()));
    }
    let mut w = output::Writer::new(&out)?;
    w.atomic("config.json", format!("{}\n", cfg.to_json()).as_bytes())?;
    match cli.command {
        Command::Validate => commands::validate(&cfg, &mut w),
        Command::Classify => commands::classify(&cfg, &mut w),
        Command::Solve => commands::solve(&cfg, &mut w).map(|_| ()),
        Command::Construct => commands::construct(&cfg, &mut w),
        Command::Simulate => commands::simulate(&cfg, &mut w),
        Command::Certify => commands::certify(&cfg, &mut w),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
