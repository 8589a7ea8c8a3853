use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;

use config::{Flags, Settings};

#[derive(Debug, Parser)]
#[command(name = "synthplan", version, about = "Retrosynthetic route planning over deduplicated AND-OR graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Plan every target on its own and write results plus a trace.
    Plan,
    /// Plan targets in clustered batches that share one graph.
    BatchPlan,
    /// Replay baseline routes into labeled training snapshots.
    GenData,
    /// Train the GNN policy or the value regressor.
    Train,
    /// Plan targets and report success curves and route statistics.
    Eval,
    /// Compare expanded and unique molecules in tree and graph mode.
    StudyRedundancy,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] synthplan::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Process exit status of a finished command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    AllSucceeded,
    SomeFailed,
}

impl CliError {
    /// 2 for bad configuration or input files, 3 for violated invariants.
    fn exit_code(&self) -> u8 {
        use synthplan::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Core(e) => match e {
                E::Config(_) | E::Io(_) | E::Json(_) | E::Parse { .. } | E::Syntax { .. } | E::WeightFormat(_) => 2,
                _ => 3,
            },
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let settings = Settings::resolve(&cli.flags)?;
    std::fs::create_dir_all(&settings.out)?;
    match cli.command {
        Command::Plan => commands::plan(&settings),
        Command::BatchPlan => commands::batch_plan(&settings),
        Command::GenData => commands::gen_data(&settings),
        Command::Train => commands::train(&settings),
        Command::Eval => commands::eval(&settings),
        Command::StudyRedundancy => commands::study_redundancy(&settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::AllSucceeded) => ExitCode::SUCCESS,
        Ok(Outcome::SomeFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
