//! `phasenoise` command-line front end.

mod commands;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phasenoise", version, about = "Laser phase-noise spectra, fits and gate-error estimates")]
struct Cli {
    /// Directory for output files and the run manifest.
    #[arg(long, global = true, default_value = "phasenoise-out")]
    out_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the Monte Carlo trial count in the config.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a noise time series from a noise model.
    Synth { config: PathBuf },
    /// Compute self-heterodyne spectra (and optionally the lineshape) on a frequency grid.
    Heterodyne { config: PathBuf },
    /// Fit a measured self-heterodyne spectrum and report the gate-error budget.
    Fit {
        /// CSV with columns freq_hz,psd.
        data: PathBuf,
        /// JSON with rbw_hz, td_s and optional normalized, peak_window_hz, budget.
        meta: PathBuf,
        #[arg(long, default_value_t = 2)]
        n_bumps: usize,
    },
    /// Monte Carlo gate error, optionally swept over one config field.
    Simulate { config: PathBuf },
    /// Closed-form or quadrature gate-error estimate.
    Analytic { config: PathBuf },
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let ov = Overrides { seed: cli.seed, trials: cli.trials };
    let out = &cli.out_dir;
    match &cli.command {
        Command::Synth { config } => commands::cmd_synth(config, out, &ov),
        Command::Heterodyne { config } => commands::cmd_heterodyne(config, out),
        Command::Fit { data, meta, n_bumps } => commands::cmd_fit(data, meta, *n_bumps, out),
        Command::Simulate { config } => commands::cmd_simulate(config, out, &ov),
        Command::Analytic { config } => commands::cmd_analytic(config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("phasenoise: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
