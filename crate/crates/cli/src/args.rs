use std::path::PathBuf;

use bhi_core::aggregation::WeightingMode;
use bhi_core::calibration::AbsentPolicy;
use bhi_core::report::{OutputFormat, PlotKind};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "bhi", version, about = "Benchmark Health Index: audit, stress-test and report on benchmark quality")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score and rank benchmarks.
    Audit(AuditArgs),
    /// Snapshot community statistics for every benchmark in a registry.
    Fetch(FetchArgs),
    /// Run a stress protocol against the full pipeline.
    Robustness(RobustnessArgs),
    /// Recompute the index across discrimination thresholds.
    SweepDelta(SweepArgs),
    /// Emit plot-ready series (no rendering).
    PlotData(PlotArgs),
    /// Write a seeded synthetic dataset (scores, registries, snapshot).
    GenerateFixture(FixtureArgs),
}

/// Inputs and pipeline options shared by every command that runs an audit.
/// A `--config` JSON file may set any of these; flags win.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataArgs {
    /// Score table (csv: model_id,benchmark_id,score_raw,metric_kind,eval_date[,variant]).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Benchmark registry (json array).
    #[arg(long)]
    pub benchmarks: Option<PathBuf>,
    /// Model registry (json array).
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Community snapshot written by `bhi fetch`.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Reference date for time decays (default: latest eval date).
    #[arg(long)]
    pub as_of: Option<NaiveDate>,
    /// EDR threshold as a fraction of each benchmark's score range (default 0.02).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Ranking weights.
    #[arg(long)]
    pub weighting: Option<WeightingMode>,
    /// Models with no LOBO battles: fail, or assign capability 0.
    #[arg(long)]
    pub absent_models: Option<AbsentPolicy>,
    /// Expert override of the 30-day projection window; renames the metric.
    #[arg(long, hide = true)]
    pub saturation_window: Option<f64>,
    /// Expert override of the 0.8 static weight; renames the metric.
    #[arg(long, hide = true)]
    pub static_weight: Option<f64>,
}

impl DataArgs {
    pub fn or(self, file: DataArgs) -> DataArgs {
        DataArgs {
            scores: self.scores.or(file.scores),
            benchmarks: self.benchmarks.or(file.benchmarks),
            models: self.models.or(file.models),
            snapshot: self.snapshot.or(file.snapshot),
            as_of: self.as_of.or(file.as_of),
            delta: self.delta.or(file.delta),
            weighting: self.weighting.or(file.weighting),
            absent_models: self.absent_models.or(file.absent_models),
            saturation_window: self.saturation_window.or(file.saturation_window),
            static_weight: self.static_weight.or(file.static_weight),
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(long, default_value = "json")]
    pub format: OutputFormat,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// JSON file supplying any data/pipeline option.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Also write the per-benchmark calibration profiles here.
    #[arg(long)]
    pub dump_calibration: Option<PathBuf>,
    /// Compose from a component-level table instead of raw scores.
    #[arg(long, conflicts_with_all = ["scores", "benchmarks", "models", "snapshot"])]
    pub components: Option<PathBuf>,
    /// Fixed pillar weights for --components (default: derive CRITIC from the table).
    #[arg(long, value_delimiter = ',', requires = "components")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dropout,
    Noise,
    Loo,
    Delta,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub stochastic: StochasticArgs,
    /// Dropout ratios.
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    /// Noise standard deviations on the unit score scale.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Delta fractions for --mode delta.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub kind: PlotKind,
    /// Keep only the top k benchmarks (ranking_bar).
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    #[arg(long)]
    pub benchmarks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 20)]
    pub timeout: u64,
    #[arg(long, default_value_t = bhi_fetch::DEFAULT_CONCURRENCY)]
    pub concurrency: usize,
    /// Stamp instead of today's date (for reproducible snapshots).
    #[arg(long)]
    pub fetched_at: Option<NaiveDate>,
    #[arg(long, default_value = bhi_fetch::DEFAULT_GITHUB_API)]
    pub github_api: String,
    #[arg(long, default_value = bhi_fetch::DEFAULT_HF_API)]
    pub hf_api: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 12 benchmarks x 20 models plus two sparse benchmarks.
    Robustness,
    /// 106 benchmarks x 91 models.
    Performance,
    /// 10 benchmarks with well-separated scores.
    Separated,
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value = "robustness")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
