//! Command-line surface. Every value flag is optional at parse time so a
//! `--config` file can supply it; required-ness is enforced during
//! resolution, where file values and defaults are merged in.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub const VERSION_LINE: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: csf v1, vccf v1, ckpt v1)"
);

#[derive(Parser)]
#[command(name = "chanlingo", version = VERSION_LINE)]
#[command(about = "Fading-channel prediction over tokenized channel changes")]
pub struct Cli {
    /// Worker threads for parallelizable stages; 1 guarantees determinism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Log filter: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic fading-channel series (CSF).
    Gen(GenArgs),
    /// Build a frequency-ranked vocabulary of quantized channel changes.
    BuildVocab(BuildVocabArgs),
    /// Train a predictor over tokenized channel changes.
    Train(TrainArgs),
    /// Predict future samples from the tail of a series.
    Predict(PredictArgs),
    /// Spliced-prediction NMSE evaluation against a zero-order-hold baseline.
    Eval(EvalArgs),
    /// Combine candidate series by per-position maximum magnitude.
    Diversity(DiversityArgs),
    /// Export per-step attention weights for one prediction (TSV, N rows x M columns).
    Attention(AttentionArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// key=value file with the generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<String>,
    /// Write the resolved configuration to this path.
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct BuildVocabArgs {
    #[arg(long = "in")]
    pub input: Vec<String>,
    /// Quantization grid step, applied after unit-power normalization.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// nlg (single stack) or nmt (encoder-decoder).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long = "in")]
    pub input: Vec<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Bidirectional encoder (nmt only).
    #[arg(long)]
    pub bidir: bool,
    /// Attention over encoder states (nmt only).
    #[arg(long)]
    pub attention: bool,
    /// gru or lstm.
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub emb: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// First decoder input: zero (the unk token) or last (the final encoder id).
    #[arg(long)]
    pub seed_mode: Option<String>,
    /// Hold the learning rate instead of the halving schedule.
    #[arg(long)]
    pub constant_lr: bool,
    /// Continue training from this checkpoint instead of fresh weights.
    #[arg(long)]
    pub init_model: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long = "in")]
    pub input: Option<String>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Temporal sampling factor: decimate history by S, predict, then
    /// interpolate back (covers M*S : N*S source samples).
    #[arg(long = "S")]
    pub s: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Predict each block from the spliced series instead of the truth.
    #[arg(long)]
    pub accumulate: bool,
    /// Normalize NMSE by the truth's power instead of the prediction's.
    #[arg(long)]
    pub truth_normalized: bool,
    #[arg(long)]
    pub report: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiversityArgs {
    #[arg(long = "in")]
    pub input: Vec<String>,
    #[arg(long)]
    pub out: Option<String>,
    /// TSV of the winning candidate index per position.
    #[arg(long)]
    pub trace: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long = "in")]
    pub input: Option<String>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}
