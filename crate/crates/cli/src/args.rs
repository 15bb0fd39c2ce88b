//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mapdelta", version, about = "Change detection and update for visual localization maps")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads for per-pair stages; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Root seed, overriding the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline config (JSON); `config init` prints every key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Suppress the JSON event log on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select query/map pairs by pose proximity.
    PairSelect(PairSelectArgs),
    /// Match descriptors and fit a homography per pair.
    Align(AlignArgs),
    /// Write per-pair change masks for accepted alignments.
    Detect(DetectArgs),
    /// Average per-pair masks into master masks.
    Aggregate(AggregateArgs),
    /// Tag changed features on masters and propagate to other map images.
    Propagate(PropagateArgs),
    /// Remove (or mark) tagged features.
    Update(UpdateArgs),
    /// Register a new section into an existing map and merge it.
    Augment(AugmentArgs),
    /// Score predicted masks against reference masks.
    Eval(EvalArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Generate a scene, run the whole pipeline and score it.
    E2e(E2eArgs),
    /// Configuration helpers.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Args)]
pub struct PairSelectArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub max_dist: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max_ang: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub alignments: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub min_support: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub masters: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub tags: PathBuf,
    /// Keep tagged features and mark them changed instead of removing them.
    #[arg(long)]
    pub mark: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long)]
    pub section: PathBuf,
    /// JSON array of `{"a": [x, y, z], "b": [x, y, z]}`, `a` in the old frame.
    #[arg(long)]
    pub corr: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted masks (8-bit PGM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of reference masks, by file name or by image id.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec (JSON); the acceptance scene when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct E2eArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ConfigCommand {
    /// Print the resolved configuration with every default filled in.
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
