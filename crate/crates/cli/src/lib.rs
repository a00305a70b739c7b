//! The `avembed` command: synth → ingest → chunk-select → cluster → train →
//! index → query → eval.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use avembed_core::data::Activation;
use avembed_core::pipeline::Method;
use clap::{Args, Parser, Subcommand};

pub use config::{Paths, RunConfig};

/// Exit status of a failed command.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] avembed_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use avembed_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Argument(_)) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(E::UndefinedSimilarity) => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "avembed", version, about = "Cross-modal audio to music-video retrieval")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered corpus.
    Synth(SynthArgs),
    /// Validate a dataset and copy the videos within a length span.
    Ingest(IngestArgs),
    /// Score audio chunks and export the selected macro-chunks.
    ChunkSelect(ChunkSelectArgs),
    /// Cluster audios with seeded k-means.
    Cluster(ClusterArgs),
    /// Fit one embedding method on a whole dataset.
    Train(TrainArgs),
    /// Embed every video of a dataset into a retrieval index.
    Index(IndexArgs),
    /// Rank indexed videos for one audio query.
    Query(QueryArgs),
    /// Cross-validate methods over query modes.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub nuisance_dim: Option<usize>,
    #[arg(long)]
    pub nuisance_std: Option<f64>,
    #[arg(long)]
    pub view_noise: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub frame_noise: Option<f64>,
    #[arg(long)]
    pub audio_dim: Option<usize>,
    #[arg(long)]
    pub visual_dim: Option<usize>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    /// Exemplars written per category to seeds.json.
    #[arg(long)]
    pub exemplars: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted length span in seconds, `MIN:MAX`.
    #[arg(long, value_parser = parse_span, default_value = "213:219")]
    pub span: (u32, u32),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory holding manifest.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModeArgs {
    /// Number of macro-chunks (3, 6 or 9); omit with --k for the mean query.
    #[arg(long)]
    pub c: Option<usize>,
    /// Number of macro-chunks kept as the query.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    /// Attention weights JSON; seeded random weights when absent.
    #[arg(long)]
    pub attention: Option<PathBuf>,
    #[arg(long)]
    pub attention_hidden: Option<usize>,
    #[arg(long)]
    pub attention_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ChunkSelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[command(flatten)]
    pub attention: AttentionArgs,
    /// Output JSON-lines file of selections.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the attention weights used.
    #[arg(long)]
    pub save_attention: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Seeds file; defaults to seeds.json in the dataset.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Output assignments (JSON lines).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Expansion fraction of ccca and sdcca.
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub target_pairs: Option<usize>,
    /// Linear ridge as a fraction of each view's mean variance.
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kcca_max_samples: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Audio branch widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub audio_layers: Option<Vec<usize>>,
    /// Visual branch widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub visual_layers: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[command(flatten)]
    pub attention: AttentionArgs,
    /// Cluster assignments; required by ccca and sdcca.
    #[arg(long)]
    pub assignments: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub assignments: Option<PathBuf>,
    /// Output index file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Video whose audio is the query.
    #[arg(long)]
    pub video: String,
    /// Number of results.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub attention: AttentionArgs,
    /// Methods to compare, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub assignments: Option<PathBuf>,
    /// Output directory for the MAP matrix, PR curves and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Step between PR output sizes.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Cutoff `N` of the AP sum.
    #[arg(long)]
    pub ap_depth: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: avembed_core::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown activation {s:?}; expected linear, relu, abs or tanh"))
}

fn parse_span(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("span must look like MIN:MAX")?;
    let lo = a.trim().parse().map_err(|_| format!("bad span start {a:?}"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad span end {b:?}"))?;
    Ok((lo, hi))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `avembed --help` for usage");
            }
            e.exit_code()
        }
    }
}
