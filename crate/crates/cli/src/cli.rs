use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use simplex_core::{LabelColumn, LossKind, QpOptions};

use crate::config::{Auto, KernelChoice, Mode, Selection, SolverConfig};
use crate::input::{parse_label_col, DataSource, Format};

#[derive(Debug, Parser)]
#[command(name = "simplex", version, about = "Multiclass learning with simplex coding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it to a file.
    Train(TrainArgs),
    /// Print one predicted label per input row.
    Predict(PredictArgs),
    /// Accuracy and confusion matrix of a model on labeled data.
    Evaluate(EvaluateArgs),
    /// S-LS error rates along the 100-value lambda grid, as CSV.
    Path(PathArgs),
    /// Numerical checks of consistency and comparison inequalities.
    VerifyTheory(VerifyArgs),
    /// Accuracy table for the datasets and solvers of a manifest.
    Benchmark(BenchArgs),
}

fn label_col(s: &str) -> Result<LabelColumn, String> {
    parse_label_col(s).map_err(|e| e.to_string())
}

fn parsed<T: std::str::FromStr<Err = anyhow::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: simplex_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Data file.
    #[arg(long)]
    pub data: PathBuf,
    /// `csv` (comma or whitespace separated) or `sparse` (`label idx:val ...`).
    #[arg(long, default_value = "csv", value_parser = parsed::<Format>)]
    pub format: Format,
    /// Label column of a csv file: `last` or a 0-based index.
    #[arg(long, default_value = "last", value_parser = label_col)]
    pub label_col: LabelColumn,
    /// The csv file starts with a header line.
    #[arg(long)]
    pub header: bool,
}

impl DataArgs {
    pub fn source(&self) -> DataSource {
        DataSource { format: self.format, label: self.label_col, header: self.header }
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// `s-ls`, `sc-svm` or `sh-svm`.
    #[arg(long, default_value = "s-ls", value_parser = loss)]
    pub loss: LossKind,
    /// `batch` or `online`.
    #[arg(long, default_value = "batch", value_parser = parsed::<Mode>)]
    pub mode: Mode,
    /// `linear` or `rbf`.
    #[arg(long, default_value = "linear", value_parser = parsed::<KernelChoice>)]
    pub kernel: KernelChoice,
    /// RBF bandwidth: `auto` (25th percentile of pairwise distances) or a number.
    #[arg(long, default_value = "auto", value_parser = parsed::<Auto>)]
    pub sigma: Auto,
    /// Regularization: `auto` (searched on the grid) or a number.
    #[arg(long, default_value = "auto", value_parser = parsed::<Auto>)]
    pub lambda: Auto,
    /// `ho` (hold-out) or `loo` (leave-one-out, s-ls batch only).
    #[arg(long, default_value = "ho", value_parser = parsed::<Selection>)]
    pub select: Selection,
    /// Training fraction of the hold-out split.
    #[arg(long, default_value_t = 0.8)]
    pub split_frac: f64,
    /// Passes over the data for online solvers.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standardize features with the training mean and deviation.
    #[arg(long)]
    pub standardize: bool,
    /// KKT tolerance of the SVM solvers.
    #[arg(long, default_value_t = 1e-6)]
    pub qp_tol: f64,
    /// Sweep cap of the SVM solvers (default 10 n T).
    #[arg(long)]
    pub max_sweeps: Option<usize>,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            loss: self.loss,
            mode: self.mode,
            kernel: self.kernel,
            sigma: self.sigma,
            lambda: self.lambda,
            select: self.select,
            split_frac: self.split_frac,
            epochs: self.epochs,
            seed: self.seed,
            standardize: self.standardize,
            qp: QpOptions { tol: self.qp_tol, max_sweeps: self.max_sweeps },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the training report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to classify; the label column is read but ignored.
    #[command(flatten)]
    pub data: DataArgs,
    /// Write predictions here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Confusion matrix as CSV (rows true, columns predicted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Random distributions per loss.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Accuracy table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table with sigma, lambda and timings.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
