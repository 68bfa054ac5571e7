//! `erb`: generate synthetic data, train a match model, sweep thresholds and
//! resolve with estimated quality bounds.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "erb", version, about = "Entity resolution with estimated lower bounds on pairwise quality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (records, gold labels, schema)
    Generate(GenerateArgs),
    /// Split a labeled dataset, train the match model and score the validation pairs
    Train(TrainArgs),
    /// Resolve the test records at every grid threshold and report bounds
    Sweep(SweepArgs),
    /// Resolve at one threshold, write the clustering and its bound report
    Resolve(ResolveArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Config file of `key = value` lines; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub per_entity: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    /// Standard deviation of the per-record Gaussian noise
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Records CSV (`id` column plus one column per schema feature)
    #[arg(long)]
    pub records: Option<String>,
    /// Schema JSON
    #[arg(long)]
    pub schema: Option<String>,
    /// Gold CSV with `id,label` columns
    #[arg(long)]
    pub gold: Option<String>,
    /// `cluster-labels` or `proxy-key`
    #[arg(long)]
    pub gold_mode: Option<String>,
    /// Run directory to write
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub train_pairs: Option<usize>,
    #[arg(long)]
    pub validation_pairs: Option<usize>,
    #[arg(long)]
    pub train_positive_fraction: Option<f64>,
    #[arg(long)]
    pub validation_positive_fraction: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Match threshold stored in the model
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Inputs shared by `sweep` and `resolve`.
#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory written by `train`
    #[arg(long)]
    pub run: Option<String>,
    /// Records to resolve instead of the run's held-out test records
    #[arg(long)]
    pub test_records: Option<String>,
    /// Gold labels for `--test-records`
    #[arg(long)]
    pub test_gold: Option<String>,
    #[arg(long)]
    pub gold_mode: Option<String>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// `estimate`, or a fixed test class balance in (0, 1)
    #[arg(long)]
    pub class_balance: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub grid_start: Option<f64>,
    #[arg(long)]
    pub grid_stop: Option<f64>,
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// precision_lb, recall_lb, f1_lb or precision_lb@recall_lb>=FLOOR
    #[arg(long)]
    pub select: Option<String>,
    /// Sweep CSV path (default RUN/sweep.csv)
    #[arg(long)]
    pub out: Option<String>,
    /// Also write RUN/clusterings/threshold_<t>.csv for every grid point
    #[arg(long)]
    pub write_clusterings: bool,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Quality gate such as `precision_lb>=0.9`; repeatable
    #[arg(long)]
    pub gate: Vec<String>,
    /// Output directory (default RUN)
    #[arg(long)]
    pub out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Resolve(a) => commands::resolve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("erb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
