//! Command-line surface. Every command writes fixed file names under `--out`
//! and archives its resolved configuration there as `config.toml`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contrasent::encoder::PoolingStrategy;
use contrasent::finetune::TaskKind;

/// Exit status for guard violations and failed sweep legs.
pub const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "contrasent", version, about = "Contrastive sentence embeddings from NLI triples")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Configuration override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// NLI rows to contrastive triples (triples.jsonl, stats.json, leakage.json).
    Prepare(PrepareArgs),
    /// Vocabulary from JSON-lines corpora (vocab.txt).
    BuildVocab(BuildVocabArgs),
    /// Contrastive pretraining (checkpoint.bin, loss.csv).
    Pretrain(PretrainArgs),
    /// Classifier fine-tuning (model.bin, metrics.json, history.json).
    Finetune(FinetuneArgs),
    /// Scores a fine-tuned model (predictions.jsonl, metrics.json).
    Evaluate(EvaluateArgs),
    /// Alignment, uniformity and attention (analysis.json, attention.json, embeddings.bin).
    Analyze(AnalyzeArgs),
    /// Accuracy@K over a claims/contexts pair (retrieval.json).
    Retrieve(RetrieveArgs),
    /// One-axis pretrain + fine-tune sweep (sweep.csv).
    Sweep(SweepArgs),
    /// Synthetic topic corpus for smoke runs.
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// NLI JSON-lines input; defaults to `nli` from the configuration.
    #[arg(long, value_name = "PATH")]
    pub nli: Option<PathBuf>,
    /// Evaluation file whose sentences must not appear in any triple. Repeatable.
    #[arg(long = "held-out", value_name = "PATH")]
    pub held_out: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    /// JSON-lines corpus. Repeatable; defaults to `triples` from the configuration.
    #[arg(long, value_name = "PATH")]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, value_name = "PATH")]
    pub triples: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    /// Continue from a pretraining checkpoint up to `epochs`.
    #[arg(long, value_name = "PATH")]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pretrained (or fine-tuned) checkpoint supplying the encoder.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// pair, single or mrc; defaults to `task` from the configuration.
    #[arg(long)]
    pub task: Option<TaskKind>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Fine-tuned model written by `finetune`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    /// Task file in the model's format; defaults to `dev`.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    /// Labelled NLI pairs for alignment and uniformity.
    #[arg(long, value_name = "PATH")]
    pub pairs: PathBuf,
    #[arg(long)]
    pub pooling: Option<PoolingStrategy>,
    /// First segment of the pair whose attention is exported.
    #[arg(long = "attention-a", value_name = "TEXT", requires = "attention_b")]
    pub attention_a: Option<String>,
    #[arg(long = "attention-b", value_name = "TEXT", requires = "attention_a")]
    pub attention_b: Option<String>,
    /// Also write embeddings.bin with its embeddings.jsonl sidecar.
    #[arg(long)]
    pub embeddings: bool,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub claims: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub contexts: PathBuf,
    #[arg(long)]
    pub pooling: Option<PoolingStrategy>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// tau, lambda, mask_rate, pooling or data_fraction.
    #[arg(long)]
    pub axis: contrasent::sweep::SweepAxis,
    /// Comma-separated values; defaults to the axis grid.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long, value_name = "PATH")]
    pub triples: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<TaskKind>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// NLI premises, one triple each.
    #[arg(long, default_value_t = 200)]
    pub premises: usize,
    /// Premises in held_out.jsonl.
    #[arg(long = "held-out", default_value_t = 100)]
    pub held_out: usize,
    #[arg(long, default_value_t = 50)]
    pub claims: usize,
    /// Contexts per claim.
    #[arg(long, default_value_t = 20)]
    pub pool: usize,
    /// Rows in each classification train file.
    #[arg(long = "task-train", default_value_t = 200)]
    pub task_train: usize,
    /// Rows in each classification dev file.
    #[arg(long = "task-dev", default_value_t = 100)]
    pub task_dev: usize,
    #[arg(long, default_value_t = 4)]
    pub choices: usize,
    #[arg(long, default_value_t = 24)]
    pub topics: usize,
    #[arg(long = "words-per-topic", default_value_t = 6)]
    pub words_per_topic: usize,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
