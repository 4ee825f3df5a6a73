//! Command-line flags. Every numeric flag is range-checked at parse time.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use magnitude::classify::{Decide, NullBasis, ScaleMode};
use magnitude::{Metric, Strategy};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "magnitude", version, about = "Metric-space magnitude: weightings, classification, active learning, outliers")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Weighting vector and magnitude of a point cloud.
    Weights(WeightsArgs),
    /// Fit, apply or tune the weighting classifier.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Active-learning benchmark with an automated oracle.
    Al(AlArgs),
    /// Outlier detection.
    Outliers(OutliersArgs),
    /// Classification benchmark over repeated stratified splits.
    Bench(BenchArgs),
    /// NULL-class experiment: train on two classes, test on a held-out third.
    BenchNull(BenchNullArgs),
    /// Write a synthetic dataset as CSV.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Serve one interactive active-learning session over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    L2,
    L1,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::L2 => Metric::L2,
            MetricArg::L1 => Metric::L1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleModeArg {
    Abs,
    Percentile,
}

impl From<ScaleModeArg> for ScaleMode {
    fn from(m: ScaleModeArg) -> ScaleMode {
        match m {
            ScaleModeArg::Abs => ScaleMode::Abs,
            ScaleModeArg::Percentile => ScaleMode::Percentile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecideArg {
    Min,
    Max,
}

impl From<DecideArg> for Decide {
    fn from(d: DecideArg) -> Decide {
        match d {
            DecideArg::Min => Decide::Min,
            DecideArg::Max => Decide::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NullBasisArg {
    Raw,
    Scaled,
}

impl From<NullBasisArg> for NullBasis {
    fn from(b: NullBasisArg) -> NullBasis {
        match b {
            NullBasisArg::Raw => NullBasis::Raw,
            NullBasisArg::Scaled => NullBasis::Scaled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Weighting,
    Uncertainty,
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Weighting => Strategy::Weighting,
            StrategyArg::Uncertainty => Strategy::Uncertainty,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

pub fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a finite number > 0, got `{s}`")),
    }
}

pub fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got `{s}`")),
    }
}

/// `>= 0`, `inf` allowed.
pub fn threshold(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 => Ok(v),
        _ => Err(format!("expected a number >= 0 or `inf`, got `{s}`")),
    }
}

pub fn finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got `{s}`")),
    }
}

pub fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number strictly between 0 and 1, got `{s}`")),
    }
}

pub fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected an integer >= 1, got `{s}`")),
    }
}

pub fn at_least_two(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("expected an integer >= 2, got `{s}`")),
    }
}

/// A `name=path` pair; a bare path takes its file stem as the name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedPath {
    pub name: String,
    pub path: PathBuf,
}

pub fn named_path(s: &str) -> Result<NamedPath, String> {
    if let Some((name, path)) = s.split_once('=') {
        if name.is_empty() || path.is_empty() {
            return Err(format!("expected NAME=PATH, got `{s}`"));
        }
        return Ok(NamedPath { name: name.into(), path: path.into() });
    }
    let path = PathBuf::from(s);
    let name = path.file_stem().and_then(|n| n.to_str()).ok_or_else(|| format!("cannot name dataset `{s}`"))?.to_string();
    Ok(NamedPath { name, path })
}

/// Output destination shared by all subcommands.
#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Write the JSON result here instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    /// Numeric CSV with a header row.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Column to ignore (name, 0-based index or `last`).
    #[arg(long)]
    pub ignore_column: Option<String>,
    #[arg(long, value_enum, default_value = "l2")]
    pub metric: MetricArg,
    /// Scale factor t.
    #[arg(short, long, default_value = "1", value_parser = positive)]
    pub t: f64,
    /// Magnitude function table at these scales instead of a single weighting.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub sweep: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Classifier settings shared by `fit` and `tune`.
#[derive(Debug, Args, Serialize)]
pub struct ClassifierArgs {
    #[arg(long, value_enum, default_value = "l2")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "abs")]
    pub scale_mode: ScaleModeArg,
    #[arg(long, value_enum, default_value = "min")]
    pub decide: DecideArg,
    /// Predict NULL when every class value exceeds this (requires --scale-mode percentile).
    #[arg(long, value_parser = finite)]
    pub null_threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "raw")]
    pub null_basis: NullBasisArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum ClassifyCommand {
    /// Fit per-class weightings and save the model.
    Fit(FitArgs),
    /// Predict labels for a CSV with a saved model.
    Predict(PredictArgs),
    /// Choose per-class scales by stratified cross-validation.
    Tune(TuneArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Labeled training CSV.
    #[arg(long)]
    pub train: PathBuf,
    /// Label column (name, 0-based index or `last`).
    #[arg(long, default_value = "last")]
    pub label_column: String,
    /// Shared scale t.
    #[arg(short, long, default_value = "1", value_parser = positive, conflicts_with = "t_per_class")]
    pub t: f64,
    /// One scale per class, in label order.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub t_per_class: Option<Vec<f64>>,
    /// Reduce each class to its distinct points before fitting.
    #[arg(long)]
    pub dedup: bool,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Model file to write.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of points to classify.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Label column of the input; when given, accuracy is reported too.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Include per-class raw and scaled scores.
    #[arg(long)]
    pub scores: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, default_value = "last")]
    pub label_column: String,
    /// Candidate scales.
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "0.1,0.3,1,3,10")]
    pub grid: Vec<f64>,
    #[arg(long, default_value = "5", value_parser = at_least_two)]
    pub folds: usize,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Also fit on all data with the chosen scales and save the model here.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AlArgs {
    /// Labeled dataset; NAME=PATH or PATH, repeatable.
    #[arg(long = "data", required = true, value_parser = named_path)]
    pub data: Vec<NamedPath>,
    #[arg(long, default_value = "last")]
    pub label_column: String,
    /// Strategies to compare; all three by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub strategy: Vec<StrategyArg>,
    #[arg(long, default_value = "100", value_parser = at_least_one)]
    pub runs: usize,
    /// Labels acquired beyond the initial one per class.
    #[arg(long, default_value = "40")]
    pub budget: usize,
    /// Laplacian kernel scale.
    #[arg(long, default_value = "0.1", value_parser = positive)]
    pub gamma: f64,
    /// Ridge term.
    #[arg(long, default_value = "0.001", value_parser = non_negative)]
    pub lambda: f64,
    #[arg(long, default_value = "4", value_parser = at_least_one)]
    pub batch: usize,
    #[arg(long, default_value = "0.67", value_parser = fraction)]
    pub pool_fraction: f64,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    /// Also write the averaged learning curves as CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
#[group(id = "source", required = true, multiple = false, args = ["input", "mixture_seed"])]
pub struct OutliersArgs {
    /// Numeric CSV with a header row.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Use the built-in two-cluster mixture with this seed instead of a file.
    #[arg(long)]
    pub mixture_seed: Option<u64>,
    /// Column to ignore (name, 0-based index or `last`).
    #[arg(long)]
    pub ignore_column: Option<String>,
    #[arg(long, value_enum, default_value = "l2")]
    pub metric: MetricArg,
    #[arg(short, long, default_value = "1", value_parser = positive)]
    pub t: f64,
    /// Magnitude-gain cutoff; `inf` keeps every candidate.
    #[arg(long, default_value = "0.2", value_parser = threshold)]
    pub tau: f64,
    /// Score candidates against the initial inlier set only.
    #[arg(long)]
    pub freeze_inliers: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Labeled dataset; NAME=PATH or PATH, repeatable.
    #[arg(long = "data", required = true, value_parser = named_path)]
    pub data: Vec<NamedPath>,
    #[arg(long, default_value = "last")]
    pub label_column: String,
    #[arg(long, default_value = "10", value_parser = at_least_one)]
    pub runs: usize,
    #[arg(long, default_value = "0.7", value_parser = fraction)]
    pub train_fraction: f64,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    /// Standardize features with training-split moments.
    #[arg(long)]
    pub standardize: bool,
    /// Keep repeated points within a training class.
    #[arg(long)]
    pub no_dedup: bool,
    #[arg(short, long, default_value = "1", value_parser = positive)]
    pub t: f64,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// CSV of reference rows (dataset,classifier,mean,std) to include in the report.
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchNullArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "last")]
    pub label_column: String,
    /// The two training classes, by label name.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values = ["6", "9"])]
    pub train_classes: Vec<String>,
    /// The held-out class, by label name.
    #[arg(long, default_value = "1")]
    pub held_out: String,
    /// NULL threshold on the raw weights.
    #[arg(long, default_value = "0.99999999999", value_parser = finite)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "raw")]
    pub null_basis: NullBasisArg,
    #[arg(short, long, default_value = "1", value_parser = positive)]
    pub t: f64,
    #[arg(long, default_value = "10", value_parser = at_least_one)]
    pub splits: usize,
    #[arg(long, default_value = "0.7", value_parser = fraction)]
    pub train_fraction: f64,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GenCommand {
    /// Uniform points labeled by a cells x cells checkerboard on [0,1]^2.
    Checkerboard {
        #[arg(long, default_value = "4", value_parser = at_least_one)]
        cells: usize,
        #[arg(long, default_value = "3000", value_parser = at_least_one)]
        points: usize,
        #[arg(long, default_value = "0", value_parser = non_negative)]
        noise: f64,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Two Gaussian clusters plus uniform background points.
    Mixture {
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Gaussian blobs, one class per center (`x,y;x,y;...`).
    Blobs {
        #[arg(long, default_value = "-3,0;3,0")]
        centers: String,
        #[arg(long, default_value = "1", value_parser = positive)]
        std: f64,
        #[arg(long, default_value = "150", value_parser = at_least_one)]
        per_class: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Two interleaved half circles.
    Moons {
        #[arg(long, default_value = "150", value_parser = at_least_one)]
        per_class: usize,
        #[arg(long, default_value = "0.1", value_parser = non_negative)]
        noise: f64,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Pool CSV; any label column must be named with --ignore-column.
    #[arg(long, required_unless_present = "resume")]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub ignore_column: Option<String>,
    /// Labeled test CSV for the accuracy history; also supplies the label names.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value = "last")]
    pub test_label_column: String,
    /// Label names when no test set is given.
    #[arg(long, value_delimiter = ',', required_unless_present_any = ["test", "resume"])]
    pub classes: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "weighting")]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value = "0.1", value_parser = positive)]
    pub gamma: f64,
    #[arg(long, default_value = "0.001", value_parser = non_negative)]
    pub lambda: f64,
    #[arg(long, default_value = "4", value_parser = at_least_one)]
    pub batch: usize,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Where POST /control checkpoint writes the session.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Resume from a checkpoint file instead of starting a new session.
    #[arg(long, conflicts_with_all = ["pool", "test", "classes"])]
    pub resume: Option<PathBuf>,
    /// Allow cross-origin requests from any origin.
    #[arg(long)]
    pub cors: bool,
}
