//! `mhj`: run one experiment from a configuration file and write its
//! tables into an output directory.
//!
//! Exit codes: 0 success, 1 output not writable, 2 bad configuration or
//! invalid parameters, 3 numerical failure.

mod commands;
mod config;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::commands::Context;
use crate::config::Config;
use crate::output::Output;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Pole table per relaxation time over a damping grid.
    Poles,
    /// Closed-form and finite-difference damping sensitivities.
    Sensitivity,
    /// Stability constants for the four model families.
    Constants,
    /// Solve the multiharmonic forward problem and record observations.
    Forward,
    /// Reconstruct the nonlinearity from linearized data.
    ReconstructLinear,
    /// Frozen Newton reconstruction from noisy nonlinear data.
    Invert,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Poles => "poles",
            Command::Sensitivity => "sensitivity",
            Command::Constants => "constants",
            Command::Forward => "forward",
            Command::ReconstructLinear => "reconstruct-linear",
            Command::Invert => "invert",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mhj", version, about = "Multiharmonic nonlinear acoustics experiments")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Configuration file (`key = value` lines, optional `[section]` headers).
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the CSV tables and gnuplot scripts.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = Config::load(&args.config).and_then(|cfg| {
        let ctx = Context { cfg: &cfg, out: Output { dir: &args.out }, seed: args.seed };
        commands::run(args.command.name(), &ctx)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mhj {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
