use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gnncl::head::CellKind;
use gnncl::trainer::ModelKind;

mod commands;
mod settings;

/// Fraud detection on multi-relation graphs.
#[derive(Debug, Parser)]
#[command(name = "gnncl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic camouflage graph in the dataset directory format.
    Generate(GenerateArgs),
    /// Train a model and write checkpoint, epochs.csv and manifest.json.
    Train(TrainArgs),
    /// Score a split with a trained checkpoint and write metrics.json.
    Evaluate(EvaluateArgs),
    /// Train one run per (value, seed) pair and collect sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    relations: Option<usize>,
    #[arg(long)]
    fraud_ratio: Option<f64>,
    #[arg(long)]
    camouflage: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Probability that a non-camouflage edge joins two nodes of the same class.
    #[arg(long)]
    intra: Option<f64>,
    #[arg(long)]
    avg_degree: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Flat key=value file using flag names as keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Weight of the purifier losses in the total loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// Threshold step size of the controller.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    init_threshold: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    train_ratio: Option<f64>,
    /// Recurrent cell of the sequence head.
    #[arg(long)]
    cell: Option<CellKind>,
    /// Keep every threshold at its initial value.
    #[arg(long)]
    no_reinforcer: bool,
    /// Use `1 + W` as the central-node self-loop weight.
    #[arg(long, value_name = "W")]
    fixed_weight: Option<f64>,
    /// Standardize each feature column to zero mean and unit variance.
    #[arg(long)]
    standardize_features: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitChoice {
    Train,
    Test,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint file, or a run directory holding checkpoint.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for metrics.json; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    split: SplitChoice,
    /// Also write per-node scores to scores.csv.
    #[arg(long)]
    dump_scores: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    Lambda,
    TrainRatio,
    Tau,
    InitThreshold,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[command(flatten)]
    model: ModelArgs,
}

/// Command failures split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<gnncl::Error> for Failure {
    fn from(e: gnncl::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
