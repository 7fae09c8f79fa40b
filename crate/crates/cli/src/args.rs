use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pointbank::{EncodingMode, PipelineConfig, Task};

#[derive(Parser, Debug)]
#[command(
    name = "pointbank",
    version,
    about = "Training-free point-cloud classification and part segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Memory-bank management.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Classify sample files against a classification bank.
    Classify(ClassifyArgs),
    /// Label every point of a sample against a segmentation bank.
    Segment(SegmentArgs),
    /// Score a bank on a manifest split.
    Eval(EvalArgs),
    /// Mean accuracy over seeded N-way K-shot episodes.
    Fewshot(FewshotArgs),
    /// Single-threaded latency, peak allocation and FLOP estimate.
    Bench(BenchArgs),
    /// Rebuild and evaluate a bank for each value of one hyperparameter.
    Sweep(SweepArgs),
    /// Convert a sample between XYZ text and packed binary (by extension).
    Convert(ConvertArgs),
    /// Write the bundled synthetic dataset and its manifest.
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug)]
pub enum BankCommand {
    /// Encode a manifest's training split into a bank file.
    Build(BuildArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Adaptive,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Cls,
    Seg,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Cls => Task::Cls,
            TaskArg::Seg => Task::Seg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

/// Encoder settings. Unset fields keep the task defaults; a bank can only be
/// queried with the settings it was built with (γ excepted).
#[derive(Args, Debug, Clone, Default)]
pub struct PipelineArgs {
    /// Embedding width d.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Neighbors per centroid.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of encoder stages T.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Points per shape (defaults to the manifest's value, or 1024).
    #[arg(long)]
    pub points: Option<usize>,
    /// Softmax temperature for bank queries.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Fourier frequencies per axis (hybrid mode; defaults to d/12).
    #[arg(long)]
    pub fourier_l: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Replace the adaptive bandwidth with a constant.
    #[arg(long)]
    pub fixed_sigma: Option<f64>,
    /// Replace the adaptive blend weight with a constant.
    #[arg(long)]
    pub fixed_blend: Option<f64>,
    /// Center clouds without rescaling them to the unit ball.
    #[arg(long)]
    pub no_scale_normalization: bool,
}

impl PipelineArgs {
    pub fn config(&self, task: Task, manifest_points: usize) -> PipelineConfig {
        let mut cfg = match task {
            Task::Cls => PipelineConfig::classification(),
            Task::Seg => PipelineConfig::segmentation(),
        };
        cfg.points = self.points.unwrap_or(manifest_points);
        let e = &mut cfg.encoding;
        if let Some(m) = self.mode {
            e.mode = match m {
                ModeArg::Adaptive => EncodingMode::AdaptiveOnly,
                ModeArg::Hybrid => EncodingMode::Hybrid,
            };
        }
        if let Some(d) = self.dim {
            e.dim = d;
            e.fourier_l = (d / 12).max(1);
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut e.sigma0, self.sigma0);
        set(&mut e.tau, self.tau);
        set(&mut e.kappa, self.kappa);
        set(&mut e.alpha, self.alpha);
        set(&mut e.beta, self.beta);
        if let Some(l) = self.fourier_l {
            e.fourier_l = l;
        }
        e.fixed_sigma = self.fixed_sigma.or(e.fixed_sigma);
        e.fixed_blend = self.fixed_blend.or(e.fixed_blend);
        if let Some(k) = self.k {
            cfg.stages.k = k;
        }
        if let Some(t) = self.stages {
            cfg.stages.stages = t;
        }
        set(&mut cfg.gamma, self.gamma);
        if self.no_scale_normalization {
            cfg.normalize_scale = false;
        }
        cfg
    }
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Store the bank in half precision.
    #[arg(long)]
    pub fp16_bank: bool,
    /// Keep this random fraction of segmentation prototypes.
    #[arg(long)]
    pub proto_keep: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Sample files to classify.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub bank: PathBuf,
    pub input: PathBuf,
    /// Category id; defaults to the one recorded in the sample file.
    #[arg(long)]
    pub category: Option<u16>,
    /// Write the labeled cloud (XYZ with labels) here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Directory for CSV and JSON reports.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct FewshotArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 5)]
    pub ways: usize,
    #[arg(long, default_value_t = 1)]
    pub shots: usize,
    #[arg(long, default_value_t = 15)]
    pub queries: usize,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Include the bank query in the timed path.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Test samples timed per repetition.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Dim,
    K,
    Stages,
    FixedSigma,
    FixedBlend,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values; rows come out sorted and deduplicated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Test samples timed per value.
    #[arg(long, default_value_t = 8)]
    pub bench_samples: usize,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    pub input: PathBuf,
    /// `.npc` writes packed binary, anything else XYZ text.
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Cls)]
    pub task: TaskArg,
    /// Training and test shapes per class (cls) or in total (seg).
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
    /// Write packed binary samples instead of XYZ text.
    #[arg(long)]
    pub packed: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
