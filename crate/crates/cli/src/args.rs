use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Superpixel explanations and evaluation reports for black-box image
/// classifiers.
#[derive(Debug, Parser)]
#[command(name = "limescope", version, propagate_version = true)]
pub struct Cli {
    /// TOML file with model definitions and default flag values
    #[arg(
        long,
        global = true,
        env = "LIMESCOPE_CONFIG",
        hide_env_values = true,
        value_name = "PATH"
    )]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a labelled image tree and write a stratified split manifest
    Split(SplitArgs),
    /// Score a manifest split and report classification metrics
    Evaluate(EvaluateArgs),
    /// Explain one image, or a manifest split, and write overlays
    Explain(ExplainArgs),
    /// Re-run an explanation with successive seeds and compare top features
    Stability(StabilityArgs),
    /// Serve a configured model over the line protocol on stdin/stdout
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset root: class-id folders or semicolon annotation CSVs
    #[arg(long, value_name = "DIR")]
    pub root: PathBuf,
    /// Train, validation and test fractions
    #[arg(long, value_name = "TRAIN,VAL,TEST", default_value = "0.7,0.1,0.2")]
    pub ratios: String,
    /// Shuffle seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of classes
    #[arg(long, default_value_t = 43)]
    pub classes: usize,
    /// Destination manifest CSV
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model: a name from the config file, or FILE.toml#NAME
    #[arg(long, value_name = "SPEC")]
    pub model: Option<String>,
    /// Resize images to HxW before prediction; "auto" uses the model's
    /// declared size, else each image's own
    #[arg(long, value_name = "HxW|auto", default_value = "62x62")]
    pub input_size: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Split manifest CSV (path,class,split)
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Manifest split to score
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of classes
    #[arg(long, default_value_t = 43)]
    pub classes: usize,
    /// Images per prediction request
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Seed for seeded models (default: the model's own)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the report JSON here as well as printing the table
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    MeanColor,
    Gray,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    /// Target number of superpixels
    #[arg(long, default_value_t = 50)]
    pub segments: usize,
    /// SLIC color/space trade-off
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    /// Perturbed samples per explanation
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Maximum superpixels in the explanation
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Proximity kernel width
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    /// Ridge penalty of the surrogate
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Fill for hidden superpixels
    #[arg(long, value_enum, default_value_t = BaselineArg::MeanColor)]
    pub baseline: BaselineArg,
    /// Class to explain: predicted, true, or an index
    #[arg(long, default_value = "predicted", value_name = "predicted|true|INDEX")]
    pub class: String,
    /// True class of --image (needed for --class true)
    #[arg(long)]
    pub label: Option<usize>,
    /// Seed for mask sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Image to explain
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    pub image: Option<PathBuf>,
    /// Explain every image of a manifest split instead
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Manifest split to explain
    #[arg(long, default_value = "test", requires = "manifest")]
    pub split: String,
    /// Explain at most this many manifest images
    #[arg(long, requires = "manifest")]
    pub limit: Option<usize>,
    /// Number of classes in the manifest
    #[arg(long, default_value_t = 43, requires = "manifest")]
    pub classes: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub surrogate: SurrogateArgs,
    /// Superpixels tinted in the overlay
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Worker threads (0: one per core)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Image to explain
    #[arg(long, value_name = "PATH")]
    pub image: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub surrogate: SurrogateArgs,
    /// Number of runs, seeds seed..seed+runs-1
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Size of the compared feature sets
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Write the report JSON here as well as printing it
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Instance image, for models built around one image
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
    /// Target number of superpixels when segmenting --image
    #[arg(long, default_value_t = 50)]
    pub segments: usize,
    /// Seed for seeded models (default: the model's own)
    #[arg(long)]
    pub seed: Option<u64>,
}
