use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scorelab_cli::{execute, Command, EXIT_FAILURE, EXIT_INVALID};

/// Sampling experiments with inexact scores.
///
/// LAB_WORKERS sets the number of worker threads (default: all cores).
/// Exit codes: 0 ok, 1 runtime failure, 2 invalid config, 3 every chain of
/// some run diverged.
#[derive(Parser)]
#[command(name = "lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its artifacts.
    Run { config: PathBuf },
    /// Check a config and report every problem without running it.
    Validate { config: PathBuf },
    /// Run the config once per value of its sweep axis.
    Sweep { config: PathBuf },
}

fn workers() -> Result<usize, String> {
    match std::env::var("LAB_WORKERS") {
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("LAB_WORKERS must be a positive integer, got `{s}`")),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Cmd::Run { config } => (Command::Run, config),
        Cmd::Validate { config } => (Command::Validate, config),
        Cmd::Sweep { config } => (Command::Sweep, config),
    };
    let n = match workers() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", path.display());
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: starting {n} workers: {e}");
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    };
    let outcome = pool.install(|| execute(command, &text, n));
    for d in &outcome.diagnostics {
        eprintln!("{d}");
    }
    for f in &outcome.files {
        println!("{}", f.display());
    }
    if outcome.exit_code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message);
    }
    ExitCode::from(outcome.exit_code as u8)
}
