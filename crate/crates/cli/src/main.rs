//! `grdl`: train, evaluate and inspect reference-distribution graph
//! classifiers on TU-format datasets.
//!
//! Configuration precedence is built-in defaults, then `--config` (which must
//! list every key), then individual flags. Progress goes to stderr; JSON and
//! CSV results go to files under `--out` or to stdout.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "grdl", version, about = "Graph classification with learned reference distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write checkpoint, metrics and manifest.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation.
    Cv(TrainArgs),
    /// Accuracy (and AUC for two classes) of a checkpoint on a dataset.
    Eval(ModelArgs),
    /// One `graph_index,predicted_class,score` line per graph.
    Predict(ModelArgs),
    /// Generalization-bound diagnostics.
    Bounds(BoundsArgs),
    /// MMD distance matrix over graphs and references as CSV.
    Distances(ModelArgs),
    /// Write an Erdős–Rényi dataset in TU format.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TU dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset name (file prefix); defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
    /// JSON training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Per-key overrides of the training configuration.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub mlp_depth: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Positive integer or G1..G5.
    #[arg(long)]
    pub ref_size: Option<String>,
    #[arg(long)]
    pub ref_per_class: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_theta: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub val_interval: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Theorem {
    Grdl,
    Gin,
    Multi,
    Misclass,
    Threshold,
}

#[derive(Args, Debug, Clone)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Loss bound for the cross-entropy variants.
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    /// Lipschitz constant of the loss; defaults to √2 (cross-entropy).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Ramp-loss margin for `misclass`.
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    /// References per class for `multi`; defaults to the checkpoint's.
    #[arg(long = "P")]
    pub refs_per_class: Option<usize>,
    /// Classifier layer norms `kappa:b` for `gin`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub classifier: Vec<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "N")]
    pub big_n: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SyntheticArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200)]
    pub graphs: usize,
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    /// Expected undirected edges per n².
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Distances(a) => commands::distances(&a),
        Command::GenSynthetic(a) => commands::gen_synthetic(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
