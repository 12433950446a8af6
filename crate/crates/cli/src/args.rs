use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "agfa", version, about = "3D vessel segmentation: phantoms, training, inference, evaluation, ablation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic vessel phantoms and a dataset manifest.
    Phantom(PhantomArgs),
    /// Train one network per cross-validation fold.
    Train(TrainArgs),
    /// Segment a volume with a trained checkpoint.
    Infer(InferArgs),
    /// Compare a predicted mask with a reference mask.
    Eval(EvalArgs),
    /// Train and evaluate every ablation configuration.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Voxels along depth, height, width.
    #[arg(long, num_args = 3, value_names = ["D", "H", "W"], default_values_t = [32, 32, 32])]
    pub extents: Vec<usize>,
    /// mm per voxel along depth, height, width.
    #[arg(long, num_args = 3, value_names = ["SD", "SH", "SW"], default_values_t = [0.5, 0.5, 0.5])]
    pub spacing: Vec<f64>,
    /// Tube segments per tree (trunk included).
    #[arg(long, default_value_t = 3)]
    pub branches: usize,
    /// Minimum and maximum tube radius in mm.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [0.6, 1.4])]
    pub radius: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Options shared by `train` and `ablate`.
#[derive(Debug, Args, Clone)]
pub struct TrainingOptions {
    #[arg(long)]
    pub data_manifest: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of cross-validation folds; 1 trains on every sample.
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    /// Folds or configurations trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
    /// Training crop along depth, height, width.
    #[arg(long, num_args = 3, value_names = ["D", "H", "W"], default_values_t = [32, 32, 32])]
    pub crop: Vec<usize>,
    #[arg(long, default_value_t = 0.003)]
    pub lr: f64,
    /// Epochs in the first warm-restart cycle.
    #[arg(long, default_value_t = 50)]
    pub t0: u64,
    /// Disable rotation and flipping (cropping still applies).
    #[arg(long)]
    pub no_augment: bool,
    /// Closing radius used by post-processing.
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// A configuration name (baseline, net1 .. net9, agfa) or a TOML file.
    #[arg(long, default_value = "agfa")]
    pub config: String,
    /// Override the configuration's base channel count.
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[command(flatten)]
    pub opts: TrainingOptions,
    /// Validate every N epochs (0 disables).
    #[arg(long, default_value_t = 1)]
    pub validate_every: usize,
    /// Continue from each fold's last checkpoint when present.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Apply closing and keep the largest connected component.
    #[arg(long)]
    pub postprocess: bool,
    /// Use the best-validation weights stored in the checkpoint.
    #[arg(long)]
    pub best: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Hd95,
    Hd100,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Text report path; a JSON copy is written next to it.
    #[arg(long)]
    pub report: PathBuf,
    /// Hausdorff variant quoted as `hausdorff_mm`.
    #[arg(long, value_enum, default_value_t = Variant::Hd95)]
    pub variant: Variant,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, default_value_t = 8)]
    pub base_channels: usize,
    #[command(flatten)]
    pub opts: TrainingOptions,
}
