use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use zsl_core::model::TrainConfig;
use zsl_core::projection::TsneConfig;

#[derive(Debug, Parser)]
#[command(
    name = "zsl",
    version,
    about = "Train, diagnose, project and steer attribute-embedding zero-shot classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory (with split.json).
    Synth(SynthArgs),
    /// Train a mapping model and write a checkpoint.
    Train(TrainArgs),
    /// Report seen (diagnostics holdout) and unseen accuracy of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Export over/under-prediction scores for seen categories.
    Diagnose(DiagnoseArgs),
    /// Project category signatures to 2D with t-SNE.
    Project(ProjectArgs),
    /// Apply an attribute weights file and retrain from scratch.
    Steer(SteerArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub seen: usize,
    #[arg(long, default_value_t = 5)]
    pub unseen: usize,
    #[arg(long, default_value_t = 12)]
    pub attrs: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Standard deviation of the additive feature noise.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Attribute index whose feature contribution is replaced by noise [default: none].
    #[arg(long)]
    pub corrupt: Option<usize>,
    /// Diagnostics holdout fraction recorded in split.json.
    #[arg(long, default_value_t = 0.2)]
    pub diag_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Dataset directory and split selection.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (features.bin, labels.csv, attributes.csv, optional split.json).
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated unseen class names [default: from checkpoint, then split.json, else none].
    #[arg(long, value_delimiter = ',')]
    pub unseen: Option<Vec<String>>,
    /// Diagnostics holdout fraction [default: from checkpoint, then split.json, else 0.2].
    #[arg(long)]
    pub diag_fraction: Option<f64>,
    /// Seed for the split and for training [default: from checkpoint, then split.json, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Hinge margin.
    #[arg(long, default_value_t = TrainConfig::default().margin_eta)]
    pub margin: f64,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().weight_decay)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = TrainConfig::default().hidden_dim)]
    pub hidden_dim: usize,
}

impl TrainFlags {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            margin_eta: self.margin,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            hidden_dim: self.hidden_dim,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TsneFlags {
    /// t-SNE perplexity [default: min(30, floor((N-1)/3))].
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long, default_value_t = TsneConfig::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = TsneConfig::default().early_exaggeration)]
    pub exaggeration: f64,
    #[arg(long, default_value_t = TsneConfig::default().exaggeration_iterations)]
    pub exaggeration_iterations: usize,
    #[arg(long, default_value_t = TsneConfig::default().learning_rate)]
    pub tsne_learning_rate: f64,
}

impl TsneFlags {
    pub fn config(&self, seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.iterations,
            early_exaggeration: self.exaggeration,
            exaggeration_iterations: self.exaggeration_iterations,
            learning_rate: self.tsne_learning_rate,
            seed,
            ..TsneConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Attribute weights file {"weights": [...]} [default: all ones].
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Attribute weights file [default: weights stored in the checkpoint].
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Metrics JSON output path [default: stdout only].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated seen categories to score [default: all seen].
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    /// Comma-separated unseen categories for the unseen_sum ordering [default: none].
    #[arg(long, value_delimiter = ',')]
    pub unseen_selection: Option<Vec<String>>,
    /// Attribute weights file [default: weights stored in the checkpoint].
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Diagnostics JSON output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub tsne: TsneFlags,
    /// Coordinates JSON output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SteerArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Attribute weights file {"weights": [...]}.
    #[arg(long)]
    pub weights: PathBuf,
    /// Also report accuracy on unseen-class instances.
    #[arg(long, default_value_t = false)]
    pub eval_unseen: bool,
    /// Retrained checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Before/after report JSON output path [default: stdout only].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub tsne: TsneFlags,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with the UI bundle served at / [default: none].
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Enable accuracy on unseen-class instances in /api/metrics and retrain jobs.
    #[arg(long, default_value_t = false)]
    pub eval_unseen: bool,
}
