//! `zdq <task> --config <file> [--out <dir>] [--seed <u64>] [--budget <nodes>]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use zdq::harness::{run_file, RunOptions, Task};

/// Design and simulate zero-delay quantizers for Markov sources.
#[derive(Debug, Parser)]
#[command(name = "zdq", version)]
struct Cli {
    /// One of: design, rollout, oracle-check, discounted-vi, schedule, occupancy.
    task: String,
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Node budget for DP solves; overrides `budget` in the config.
    #[arg(long)]
    budget: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let task = match Task::parse(&cli.task) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let options = RunOptions {
        task: Some(task),
        out_dir: cli.out,
        seed: cli.seed,
        budget: cli.budget,
    };
    match run_file(&cli.config, &options) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
