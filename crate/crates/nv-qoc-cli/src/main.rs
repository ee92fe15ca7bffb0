//! `nvqoc`: simulate, optimize and analyze NV-center pulse experiments from
//! a TOML problem description.

use clap::{Args, Parser, Subcommand};
use nv_qoc_cli::run::execute;
use nv_qoc_cli::Command;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "nvqoc",
    version,
    about = "NV-center pulse simulation, optimal control and sensing analysis",
    long_about = "Reads a TOML problem description and writes deterministic result files: \
                  the same config and seed always produce byte-identical output. \
                  Exit codes: 0 success, 2 config error, 3 numeric failure, \
                  4 unsupported combination."
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Propagate a pulse and write the state trajectory table.
    Simulate(RunArgs),
    /// Optimize a pulse against the configured cost; writes a report and the
    /// final pulse table.
    Optimize(RunArgs),
    /// Sweep a sensing sequence: phase, population and filter tables.
    Sense(RunArgs),
    /// Quantum speed limit and controllability diagnostics.
    Limits(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Problem description (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the seed from the config. Without either, the seed is 0.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Optimize(a) => (Command::Optimize, a),
        CliCommand::Sense(a) => (Command::Sense, a),
        CliCommand::Limits(a) => (Command::Limits, a),
    };

    let start = Instant::now();
    match execute(cmd, &args.config, &args.out, args.seed) {
        Ok(output) => {
            for line in &output.summary {
                println!("{line}");
            }
            for path in &output.files {
                println!("wrote {}", path.display());
            }
            // Timing goes to stdout only; files stay reproducible.
            println!("wall_time_s = {:.3}", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
