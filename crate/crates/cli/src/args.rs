//! Command-line argument declarations for every subcommand.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bilink",
    version,
    about = "Text-based knowledge-graph link prediction and entity linking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a spec file.
    Synth(SynthArgs),
    /// Warm up the encoders on part-of-speech tagging of descriptions.
    PosPretrain(PosPretrainArgs),
    /// Train the paired link-prediction encoders.
    Train(TrainArgs),
    /// Rank held-out edges with a trained checkpoint.
    Eval(EvalArgs),
    /// Build lexical candidate sets for mentions.
    ElBuild(ElBuildArgs),
    /// Train the mention-to-candidate encoders.
    ElTrain(ElTrainArgs),
    /// Rank candidates for mentions with a trained checkpoint.
    ElEval(ElEvalArgs),
}

impl Command {
    /// Output directory of the subcommand, where diagnostics also land.
    pub fn out_dir(&self) -> &PathBuf {
        match self {
            Command::Synth(a) => &a.out,
            Command::PosPretrain(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::ElBuild(a) => &a.out,
            Command::ElTrain(a) => &a.out,
            Command::ElEval(a) => &a.out,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::PosPretrain(_) => "pos-pretrain",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::ElBuild(_) => "el-build",
            Command::ElTrain(_) => "el-train",
            Command::ElEval(_) => "el-eval",
        }
    }
}

/// Training knobs shared by `train` and `el-train`. Values given here
/// override the config file, which overrides the defaults.
#[derive(Args)]
pub struct TrainOverlay {
    /// Optional `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight of the cross-direction repulsion term.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Cosine temperature.
    #[arg(long)]
    pub temp: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Triples or mentions per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for splits, batching, and initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; any value reproduces the single-threaded numbers.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Dataset spec JSON (a graph spec or a linking-corpus spec).
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Directory the dataset files are written to.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overrides the seed inside the spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// How to split a generated graph.
    #[arg(long, value_enum, default_value_t = SplitModeArg::Transductive)]
    pub split_mode: SplitModeArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    /// Held-out edges between training entities.
    Transductive,
    /// Held-out edges in an entity-disjoint evaluation graph.
    Inductive,
}

#[derive(Args)]
pub struct PosPretrainArgs {
    /// entities.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub entities: PathBuf,
    /// triples.tsv path.
    #[arg(long, value_name = "FILE")]
    pub triples: PathBuf,
    /// Directory for checkpoint and report.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Template rule base JSON stored into the checkpoint.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    /// Tagging epochs.
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Sequences per batch.
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Seed for initialization and batching.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; any value reproduces the single-threaded numbers.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args)]
pub struct TrainArgs {
    /// entities.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub entities: PathBuf,
    /// triples.tsv path.
    #[arg(long, value_name = "FILE")]
    pub triples: PathBuf,
    /// splits.json path.
    #[arg(long, value_name = "FILE")]
    pub splits: PathBuf,
    /// Evaluation-graph entities.jsonl (inductive splits only).
    #[arg(long, value_name = "FILE", requires = "eval_triples")]
    pub eval_entities: Option<PathBuf>,
    /// Evaluation-graph triples.tsv (inductive splits only).
    #[arg(long, value_name = "FILE", requires = "eval_entities")]
    pub eval_triples: Option<PathBuf>,
    /// Directory for checkpoint, epoch log, and report.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Checkpoint to continue from instead of a fresh initialization.
    #[arg(long, value_name = "FILE")]
    pub init_from: Option<PathBuf>,
    /// Template rule base JSON; defaults to the built-in single template.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    /// Expected mixture size; must equal the number of templates.
    #[arg(long)]
    pub k_clusters: Option<usize>,
    /// Seed edge labels TSV for template selection.
    #[arg(long, value_name = "FILE")]
    pub seed_labels: Option<PathBuf>,
    #[command(flatten)]
    pub overlay: TrainOverlay,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Trained checkpoint path.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// entities.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub entities: PathBuf,
    /// triples.tsv path.
    #[arg(long, value_name = "FILE")]
    pub triples: PathBuf,
    /// splits.json path.
    #[arg(long, value_name = "FILE")]
    pub splits: PathBuf,
    /// Evaluation-graph entities.jsonl (inductive splits only).
    #[arg(long, value_name = "FILE", requires = "eval_triples")]
    pub eval_entities: Option<PathBuf>,
    /// Evaluation-graph triples.tsv (inductive splits only).
    #[arg(long, value_name = "FILE", requires = "eval_entities")]
    pub eval_triples: Option<PathBuf>,
    /// Directory for the ranking report and per-query dump.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Which held-out split to rank.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Shortlist size for the re-encoding pass.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Weight of the re-encoding score in the ensemble.
    #[arg(long, default_value_t = 0.5)]
    pub w: f64,
    /// Cosine temperature.
    #[arg(long, default_value_t = 0.05)]
    pub temp: f64,
    /// Fold incident relational embeddings into the index before scoring.
    #[arg(long)]
    pub posthoc: bool,
    /// Recorded in the report; ranking itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Valid,
    Test,
}

#[derive(Args)]
pub struct ElBuildArgs {
    /// documents.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub documents: PathBuf,
    /// mentions.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub mentions: PathBuf,
    /// Directory for candidates.jsonl and the report.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Candidate set size.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Insert a missing gold at the last slot instead of dropping the mention.
    #[arg(long)]
    pub force_gold: bool,
    /// Seed for random padding documents.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ElTrainArgs {
    /// documents.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub documents: PathBuf,
    /// mentions.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub mentions: PathBuf,
    /// candidates.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    /// Directory for checkpoint, epoch log, and report.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Checkpoint to continue from instead of a fresh initialization.
    #[arg(long, value_name = "FILE")]
    pub init_from: Option<PathBuf>,
    #[command(flatten)]
    pub overlay: TrainOverlay,
}

#[derive(Args)]
pub struct ElEvalArgs {
    /// Trained checkpoint path.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// documents.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub documents: PathBuf,
    /// mentions.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub mentions: PathBuf,
    /// candidates.jsonl path.
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    /// Directory for the ranking report.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Recorded in the report; ranking itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
