//! `sshchain` command-line driver.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::*;
use crate::error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "sshchain", version, about = "State transfer through dimerized XXZ spin chains")]
struct Cli {
    /// Directory receiving CSV/JSON artifacts and the manifest
    #[arg(long, global = true, env = "SSHCHAIN_OUT", default_value = "sshchain-out")]
    out: PathBuf,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-excitation spectrum and edge localization
    Spectrum(SpectrumArgs),
    /// Time trace of a transfer metric and its best value in a window
    Transfer(TransferArgs),
    /// Metric map over the (delta, eta) plane
    Map(MapArgs),
    /// Exact perfect-transfer points of the four-site chain
    Kay(KayArgs),
    /// Disorder-averaged transfer at a fixed arrival time
    Disorder(DisorderArgs),
    /// Population leaking out of the initial magnetization sector
    Dipolar(DipolarArgs),
    /// Optimal-control pulse for end-to-end transfer
    Control(ControlArgs),
    /// Minimum control duration versus dimerization
    Tmin(TminArgs),
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Spectrum(a) => spectrum(&a, &cli.out),
        Command::Transfer(a) => transfer(&a, &cli.out),
        Command::Map(a) => map(&a, &cli.out),
        Command::Kay(a) => kay(&a, &cli.out),
        Command::Disorder(a) => disorder(&a, &cli.out),
        Command::Dipolar(a) => dipolar(&a, &cli.out),
        Command::Control(a) => control(&a, &cli.out),
        Command::Tmin(a) => tmin(&a, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
