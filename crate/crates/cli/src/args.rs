use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tlgrf_core::detection::F1Variant;
use tlgrf_core::forecast::{ErrorScale, MethodSpec};

#[derive(Debug, Parser)]
#[command(name = "covid-growth", version, about = "County growth-rate estimation, forecasting and outbreak detection")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the log-incidence modeling table and write it out.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Growth-rate estimates and doubling times per county and day.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[command(flatten)]
        days: DayArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward-chained seven-day forecast benchmark.
    Benchmark {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Comma-separated methods, e.g. `ols:2,ols:14,tcv,ctcv,kmeans:4,tlgrf`.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<MethodSpec>,
        /// First base day (date or day number).
        #[arg(long)]
        from: Option<String>,
        /// Last base day (date or day number).
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        horizon: Option<u32>,
        /// Window grid for the cross-validated methods, `2..14` or `2,7,14`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        scale: Option<ErrorScale>,
        /// Per-day metrics.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-method medians; also printed to stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Every rate estimate behind the report.
        #[arg(long)]
        estimates: Option<PathBuf>,
    },
    /// Outbreak classification with a fixed or tuned rate threshold.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// A rate, or `auto` to tune on the validation range.
        #[arg(long, default_value = "auto")]
        threshold: String,
        #[arg(long, default_value_t = 7, value_parser = parse_lookahead)]
        lookahead: u32,
        /// `train,validation,test` ranges of label days, each `a..b`.
        #[arg(long)]
        split: String,
        /// A cell is an outbreak when `ln I` grows by more than this over the lookahead.
        #[arg(long, default_value_t = std::f64::consts::LN_2)]
        min_log_growth: f64,
        /// Candidate thresholds, `lo:hi:step` or a comma list.
        #[arg(long, default_value = "0:0.2:0.005")]
        grid: String,
        #[arg(long, value_enum, default_value_t = F1Arg::Standard)]
        f1: F1Arg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validation F1 for every candidate threshold.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Top-capacity investigation recommendations at decision points.
    Allocate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// `date,capacity[,excluded]` with `;`-separated excluded counties.
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 7)]
        lookahead: u32,
        /// Also count counties with projected new cases above this value.
        #[arg(long)]
        absolute_threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split-frequency feature importance of the forest for one day.
    Importance {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        day: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tree depth and leaf size statistics of the forest for one day.
    Diagnostics {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        day: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-tree depth and leaf counts.
        #[arg(long)]
        per_tree: Option<PathBuf>,
    },
    /// SVG line chart of a benchmark report.
    Plot {
        /// Per-day report written by `benchmark --out`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Mae)]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
        /// Plotted values; defaults to the SVG path with a `.csv` extension.
        #[arg(long)]
        data_out: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
    /// Write a synthetic panel with aligned rate breaks.
    Synth {
        #[arg(long)]
        counties: Option<usize>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long = "break-day")]
        break_days: Vec<u32>,
        /// Segment rates, one more than the break days.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rates: Vec<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        spread: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Cumulative cases, `date,county,cases`.
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Feature sources; repeat for several files.
    #[arg(long)]
    pub features: Vec<PathBuf>,
    /// TOML feature schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub incidence_window: Option<u32>,
    #[arg(long)]
    pub smooth_window: Option<usize>,
    #[arg(long)]
    pub min_count: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value_t = MethodName::Tlgrf)]
    pub method: MethodName,
    /// Window length for `ols` and `tlgrf-delta`.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=14))]
    pub delta: Option<u32>,
    /// Cluster count for `kmeans`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    TwoPoint,
    Ols,
    Tcv,
    Ctcv,
    Kmeans,
    Tlgrf,
    TlgrfDelta,
    TlgrfTimeOnly,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    /// Required for forest and k-means methods.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub min_node: Option<usize>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub honesty_fraction: Option<f64>,
    /// Grow and estimate on the same half.
    #[arg(long)]
    pub no_honesty: bool,
}

#[derive(Debug, Args)]
pub struct DayArgs {
    /// Single day (date or day number); defaults to the last day.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    pub day: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum F1Arg {
    Standard,
    RateHarmonic,
}

impl From<F1Arg> for F1Variant {
    fn from(v: F1Arg) -> Self {
        match v {
            F1Arg::Standard => F1Variant::Standard,
            F1Arg::RateHarmonic => F1Variant::RateHarmonic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Mae,
    Rmse,
    Mape,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
            Metric::Mape => "mape",
        }
    }
}

fn parse_lookahead(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(v @ (7 | 14 | 21)) => Ok(v),
        _ => Err("lookahead must be 7, 14 or 21".into()),
    }
}
