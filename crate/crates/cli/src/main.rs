//! `confalign`: generate confidence records, build preference pairs, and
//! report verbal/internal confidence alignment.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 backend
//! failure, 3 data error.

mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BuildPrefsArgs, EvaluateArgs, GenerateArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(name = "confalign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Query a backend and write per-question confidence records.
    Generate(GenerateArgs),
    /// Turn records plus raw responses into chosen/rejected pairs.
    BuildPrefs(BuildPrefsArgs),
    /// Compute alignment metrics, tables and plot data.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline on the mock backend, vanilla vs. aligned.
    Simulate(SimulateArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::BuildPrefs(a) => commands::build_prefs(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
