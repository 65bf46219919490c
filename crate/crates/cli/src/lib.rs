//! Command-line front end: dataset generation, training, prediction,
//! evaluation and probability grids.

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};
pub use eval::EvalReport;

#[derive(Debug, Parser)]
#[command(
    name = "gpcnoise",
    version,
    about = "Sparse variational GP classification"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice; 0 when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Main output file.
    #[arg(short = 'o', long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Overrides a config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Fit a classifier and write a checkpoint plus a training trace.
    Train(TrainArgs),
    /// Class probabilities for the rows of a CSV.
    Predict(PredictArgs),
    /// Accuracy, NLL and confusion counts on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Probabilities on a regular 2-D grid, plus the inducing locations.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    /// Two interleaved crescents, a stand-in for the banana benchmark.
    TwoMoons,
    /// Argmax of latent functions drawn from a GP prior.
    GpMulticlass,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    pub generator: Generator,
    #[arg(long)]
    pub n: usize,
    /// Jitter standard deviation (two-moons).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Class count (gp-multiclass).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Prior kernel family (gp-multiclass).
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub variance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV, label in the last column unless `label_column` is set.
    pub data: PathBuf,
    /// step, probit, logit, softmax, or a=<variance>.
    #[arg(long)]
    pub likelihood: Option<String>,
    /// rbf, matern32, matern52, or a sum such as rbf+matern32.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub variance: Option<f64>,
    /// Number of inducing points.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Initial flip probability δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// 1-based label column.
    #[arg(long)]
    pub label_column: Option<usize>,
    /// Trace CSV; defaults to `<out stem>.trace.csv`.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    /// Features only, or features plus a label column.
    pub data: PathBuf,
    /// Monte-Carlo draws for softmax models.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    /// Labelled test CSV.
    pub data: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    pub checkpoint: PathBuf,
    /// `x1min,x1max,x2min,x2max` in raw input units.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// Points per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Inducing-location CSV; defaults to `<out stem>.inducing.csv`.
    #[arg(long, value_name = "FILE")]
    pub inducing_out: Option<PathBuf>,
}

/// Runs one parsed invocation, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(&cli.global, a, out),
        Command::Train(a) => commands::train(&cli.global, a, out),
        Command::Predict(a) => commands::predict(&cli.global, a, out),
        Command::Evaluate(a) => commands::evaluate(&cli.global, a, out),
        Command::Grid(a) => commands::grid(&cli.global, a, out),
    }
}
