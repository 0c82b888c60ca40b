//! `shotface`: dataset ingestion, embedding, single-shot fine-tuning and
//! open-set evaluation from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shotface::encoder::MockConfig;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(name = "shotface", version, about = "Open-set face recognition with single-shot prompt-embedding fine-tuning")]
pub struct Cli {
    /// Hyperparameter file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for splits, shuffles, initialization and the mock encoder.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Index a folder-per-identity dataset and split it into train/test.
    Ingest {
        /// Dataset root holding one directory per identity.
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of each identity's images used for training.
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
    },
    /// Embed every indexed image with the frozen encoder.
    Embed {
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune the class embeddings on the train split.
    Finetune(FinetuneArgs),
    /// Score deployment sessions and write a report.
    Evaluate(EvaluateArgs),
    /// Summarize pairwise cosine similarity of cached embeddings.
    Diagnose {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Combine report CSV files into one comparison table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recognize a single image.
    Predict {
        image: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Write a synthetic mock-encoder dataset and deployment sessions.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        known: usize,
        #[arg(long, default_value_t = 2)]
        unknown: usize,
        #[arg(long, default_value_t = 30)]
        images: usize,
        #[arg(long, default_value_t = 5)]
        frames: usize,
    },
}

/// Either a backend manifest or the built-in mock encoder.
#[derive(Args, Debug, Clone)]
pub struct EncoderArgs {
    /// Encoder backend manifest.
    #[arg(long, conflicts_with = "mock", required_unless_present = "mock")]
    pub manifest: Option<PathBuf>,
    /// Use the deterministic mock encoder (seeded by --seed).
    #[arg(long)]
    pub mock: bool,
    #[arg(long, default_value_t = MockConfig::default().dim)]
    pub mock_dim: usize,
    #[arg(long, default_value_t = MockConfig::default().centers)]
    pub mock_centers: usize,
    /// Angle between mock identity centers, degrees.
    #[arg(long, default_value_t = MockConfig::default().separation_deg)]
    pub mock_separation: f64,
    /// Angular noise scale of mock embeddings, degrees.
    #[arg(long, default_value_t = MockConfig::default().noise_deg)]
    pub mock_noise: f64,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Prompt-embedding file for initialization; random unit vectors if absent.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Prompt template with one `{}` placeholder for the identity name.
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub logit_scale: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training history CSV (default: next to --out with `.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    /// Session manifest file or directory of `<name>/frame_*.png` sessions.
    #[arg(long)]
    pub sessions: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Embedding cache whose test split gives the training accuracy column.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Model name for the report row (default: encoder backend name).
    #[arg(long)]
    pub model: Option<String>,
    /// Report CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_target(false)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
