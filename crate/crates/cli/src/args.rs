use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "driftscope", version, about = "Concept-drift evaluation for time-stamped text classification")]
pub struct Cli {
    /// Worker threads (0 = all available cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resolve raw annotator votes into a labeled corpus.
    Ingest(IngestArgs),
    /// Assign a resolved corpus to time bins and write the split manifest.
    Bins(BinsArgs),
    /// Run the sliding-window drift protocol.
    Drift(DriftArgs),
    /// Repeat the protocol for several total training sizes.
    AblateSize(AblateSizeArgs),
    /// Repeat the protocol for several window lengths at a fixed training size.
    AblateWindow(AblateWindowArgs),
    /// Per-bin label, agreement and embedding diagnostics.
    Diagnose(DiagnoseArgs),
    /// Weekly sentiment index of a legacy and a periodically updated model.
    Sentiment(SentimentArgs),
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Line-delimited JSON votes.
    #[arg(long)]
    pub input: PathBuf,
    /// Resolved corpus (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of rejected input lines.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

/// Overrides for experiment-plan fields; unset flags keep the plan file's
/// (or the default) value.
#[derive(Debug, Args, Default, Clone)]
pub struct PlanArgs {
    /// Plan file (TOML) with ExperimentPlan fields.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub bin_days: Option<u32>,
    #[arg(long)]
    pub window_bins: Option<usize>,
    #[arg(long)]
    pub n_train_per_bin: Option<usize>,
    #[arg(long)]
    pub n_eval_per_bin: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Start of bin 0 (RFC 3339).
    #[arg(long)]
    pub origin: Option<String>,
    /// Split undersized bins proportionally instead of failing.
    #[arg(long)]
    pub downsample: bool,
}

/// Overrides for built-in classifier fields.
#[derive(Debug, Args, Default, Clone)]
pub struct ClassifierArgs {
    /// Classifier config file (TOML) with ClassifierConfig fields.
    #[arg(long)]
    pub classifier_config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub word_ngrams: Option<usize>,
    #[arg(long)]
    pub bucket_count: Option<u64>,
    #[arg(long)]
    pub min_token_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BinsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Resolved corpus (JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// External model spec (TOML); replaces the built-in classifier.
    #[arg(long, conflicts_with_all = ["classifier_config", "dim", "epochs", "lr0", "word_ngrams", "bucket_count", "min_token_count"])]
    pub external: Option<PathBuf>,
    /// Persist finished (window, repeat) units here and reuse them.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Bootstrap resamples per interval.
    #[arg(long, default_value_t = driftscope_core::metrics::DEFAULT_DRAWS)]
    pub bootstrap_draws: usize,
    /// Interval coverage.
    #[arg(long, default_value_t = driftscope_core::metrics::DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct AblateSizeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Total training examples per model, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct AblateWindowArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Window lengths in days, comma separated; multiples of bin_days.
    #[arg(long, value_delimiter = ',', required = true)]
    pub window_days: Vec<u32>,
    /// Total training examples per model, held constant across lengths.
    #[arg(long)]
    pub total_train: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Deterministic hashed random projection of token vectors.
    Hashed,
    /// Precomputed vectors from --embeddings.
    File,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, value_enum, default_value_t = ProviderKind::Hashed)]
    pub provider: ProviderKind,
    /// `id<TAB>dim<TAB>v1,v2,...` lines; required with --provider file.
    #[arg(long, required_if_eq("provider", "file"))]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
}

#[derive(Debug, Args)]
pub struct SentimentArgs {
    /// Resolved corpus used to train the models.
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSONL stream of {"created_at", "text"} objects to score.
    #[arg(long)]
    pub stream: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Window whose model serves as the legacy model.
    #[arg(long, default_value_t = 0)]
    pub legacy_window: usize,
    /// Repeat whose splits train the models.
    #[arg(long, default_value_t = 0)]
    pub repeat: usize,
    /// Skip stream items older than the first model instead of failing.
    #[arg(long)]
    pub drop_early: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: static, vocabulary-swap or negative-shift.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the scenario item count.
    #[arg(long)]
    pub n_items: Option<usize>,
    /// Vote records (JSONL, ingest input format).
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of item_id,created_at,true_label.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// JSONL stream of {"created_at", "text"} for the sentiment command.
    #[arg(long)]
    pub stream: Option<PathBuf>,
}
