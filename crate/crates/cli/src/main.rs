//! `percept`: feature extraction, triplet generation, training and evaluation
//! of perceptual distance models.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use percept_core::data::Protocol;
use percept_core::models::ModelKind;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "percept", version, about = "Perceptual metric learning from triplet comparisons")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter-bank features for every signal in a manifest.
    Features(FeaturesArgs),
    /// Synthetic signals, a random ground-truth metric and triplet files.
    Synth(SynthArgs),
    /// Train/test triplets from a confusion matrix under a protocol.
    Triplets(TripletsArgs),
    /// Train a model and estimate its margin threshold.
    Train(TrainArgs),
    /// Evaluate a model on triplets, pairs or class similarity.
    Eval(EvalArgs),
    /// Repeated split, train and evaluate runs with ablations.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Mahalanobis,
    CayleyKlein,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Serialize)]
pub struct FeaturesArgs {
    /// Manifest JSON listing signal files.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    /// Disable worker threads.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    sequential: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<SynthKind>,
    /// Number of signals.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Signal dimension.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    counts: CountArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CountArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_hm: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_lm: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_hm: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_lm: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    protocol: Option<Protocol>,
    /// Signals per class held out under held-out-samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    held_out_per_class: Option<usize>,
    /// Fraction of classes held out under held-out-classes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    held_out_class_fraction: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct TripletsArgs {
    /// Confusion matrix CSV (size line, then rows).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<PathBuf>,
    /// Feature CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    counts: CountArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelKind>,
    /// PerceptNet base channel width (default schedule when omitted).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    /// Use plain instead of squared distances inside the loss.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    unsquared: bool,
    /// Disable worker threads.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    sequential: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Feature or signal CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<PathBuf>,
    /// Training triplet CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    triplets: Option<PathBuf>,
    /// Z-score inputs with statistics of the training signals.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    normalize: bool,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    /// Feature or signal CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<PathBuf>,
    /// Test triplet CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    triplets: Option<PathBuf>,
    /// Pairwise precision-recall evaluation.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pairs: bool,
    /// Class similarity matrix.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    similarity: bool,
    /// Confusion matrix CSV providing pair labels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<PathBuf>,
    /// Ground-truth metric JSON written by `synth`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<PathBuf>,
    /// Split manifest; pairs and similarity use its test signals.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<PathBuf>,
    /// Margin threshold (defaults to the one stored with the model).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    xi: Option<f64>,
    /// Disable worker threads.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    sequential: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct ExperimentArgs {
    /// Feature CSV (with --confusion) for perceptual data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<PathBuf>,
    /// Generate synthetic data of this kind instead of reading files.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic: Option<SynthKind>,
    /// Synthetic signal count.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Synthetic signal dimension.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    folds: Option<usize>,
    /// Train on high-margin triplets only.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    hm_only: bool,
    /// Train on triplets drawn with a zero margin.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    xi_zero: bool,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    size_sweep: Vec<usize>,
    /// Pairwise precision-recall evaluation per fold.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pairwise: bool,
    /// Class similarity matrix per fold.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    similarity: bool,
    /// Z-score inputs per fold (default on for feature files).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    normalize: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    counts: CountArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let global = commands::Global {
        seed: cli.seed,
        out: cli.out,
        config: cli.config,
    };
    let result = match &cli.command {
        Command::Features(a) => commands::features(&global, a),
        Command::Synth(a) => commands::synth(&global, a),
        Command::Triplets(a) => commands::triplets(&global, a),
        Command::Train(a) => commands::train_cmd(&global, a),
        Command::Eval(a) => commands::eval(&global, a),
        Command::Experiment(a) => commands::experiment(&global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
