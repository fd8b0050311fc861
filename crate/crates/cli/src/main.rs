//! `dcfl` — continual federated learning simulator with diffusion replay.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 selftest
//! failure.

use clap::{Parser, Subcommand};
use dcfl_cli::{cmd_run, cmd_sweep, parse_config, run_selftest, CliError, SweepAxis};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dcfl", about = "Continual federated learning simulator with diffusion replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv / summary.csv.
    Run { config: PathBuf },
    /// Run the experiment once per axis value and write a sweep summary.
    Sweep {
        config: PathBuf,
        /// Sweep axis: `clients` or `delta`.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
    },
    /// Run the built-in verification suites.
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config } => {
            let config = parse_config(&config)?;
            let artifacts = cmd_run(&config)?;
            let last = artifacts.records.last().expect("at least one round");
            println!(
                "{} rounds, final accuracy {:.4}, outputs in {}",
                artifacts.records.len(),
                last.global_accuracy,
                artifacts.rounds_csv.parent().unwrap().display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let config = parse_config(&config)?;
            let axis = SweepAxis::parse(&axis, &values)?;
            let path = cmd_sweep(&config, &axis)?;
            println!("sweep written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            // Test hook: names a suite to corrupt so the failure path can
            // be exercised end to end.
            let corrupt = std::env::var("DCFL_SELFTEST_CORRUPT").ok();
            let results = run_selftest(corrupt.as_deref());
            println!("{:<24} {:<6} detail", "suite", "result");
            let mut all_passed = true;
            for r in &results {
                println!(
                    "{:<24} {:<6} {}",
                    r.name,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.detail
                );
                all_passed &= r.passed;
            }
            if all_passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
    }
}
