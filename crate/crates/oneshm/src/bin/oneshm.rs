//! Batch experiment runner.  All substance lives in the library; this
//! binary parses a command, loads a config, and maps outcomes to exit codes:
//! 0 when every asserted check passes, 1 when any fails, 2 on config or
//! validation errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oneshm::config::{self, SCHEMA_VERSION};
use oneshm::runner;

#[derive(Parser)]
#[command(
    name = "oneshm",
    about = "Config-driven experiments with empirical microlocal defect measures",
    disable_version_flag = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a config and write its artifacts.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Print the JSON schema of the config format.
    Schema,
    /// Print the binary and config-schema versions.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run(&config),
        Command::Validate { config } => validate(&config),
        Command::Schema => {
            println!(
                "{}",
                serde_json::to_string_pretty(&config::schema()).expect("schema serializes")
            );
            0
        }
        Command::Version => {
            println!(
                "oneshm {} (config schema {})",
                env!("CARGO_PKG_VERSION"),
                SCHEMA_VERSION
            );
            0
        }
    };
    ExitCode::from(code)
}

fn run(path: &PathBuf) -> u8 {
    let experiment = match config::load(path) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match runner::run(&experiment) {
        Ok(outcome) => {
            for check in &outcome.checks {
                let verdict = if check.passed { "pass" } else { "FAIL" };
                println!("{verdict}  {}: {}", check.name, check.detail);
            }
            for artifact in &outcome.artifacts {
                println!("wrote {}", artifact.display());
            }
            if outcome.all_passed {
                println!("ok: all asserted checks passed");
                0
            } else {
                println!("FAILED: at least one asserted check failed");
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn validate(path: &PathBuf) -> u8 {
    match config::load(path) {
        Ok(exp) => {
            println!(
                "ok: {} is a valid {} config (action {}, grid {}^{}, seed {})",
                path.display(),
                exp.version,
                exp.action.name(),
                exp.grid.points_per_axis(),
                exp.grid.dim(),
                exp.seed
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
