//! Accuracy tables over several datasets and solver configurations.
//!
//! A manifest is TOML:
//!
//! ```toml
//! seed = 0
//!
//! [[dataset]]
//! name = "blobs"
//! train = "blobs_train.csv"    # relative to the manifest
//! test = "blobs_test.csv"      # optional; otherwise split off `train`
//! format = "csv"               # or "sparse"
//! label_col = "last"           # or a 0-based index
//! header = false
//! max_train = 5000             # optional stratified subsample
//!
//! [[solver]]
//! name = "S-LS rbf batch (loo)"
//! loss = "s-ls"
//! mode = "batch"
//! kernel = "rbf"
//! sigma = "auto"
//! lambda = "auto"
//! select = "loo"
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Deserialize;
use simplex_core::data::split;
use simplex_core::srls::error_rate;
use simplex_core::{Dataset64, SplitSpec};

use crate::config::{Auto, SolverConfig};
use crate::error::usage;
use crate::fit::train;
use crate::input::{parse_label_col, DataSource};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrWord {
    Num(f64),
    Word(String),
}

impl NumOrWord {
    fn to_auto(&self) -> anyhow::Result<Auto> {
        match self {
            NumOrWord::Num(v) => Ok(Auto::Value(*v)),
            NumOrWord::Word(w) => w.parse(),
        }
    }

    fn word(&self) -> String {
        match self {
            NumOrWord::Num(v) => v.to_string(),
            NumOrWord::Word(w) => w.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    seed: u64,
    #[serde(rename = "dataset", default)]
    datasets: Vec<DatasetEntry>,
    #[serde(rename = "solver", default)]
    solvers: Vec<SolverEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    name: String,
    train: PathBuf,
    test: Option<PathBuf>,
    #[serde(default = "default_format")]
    format: String,
    label_col: Option<NumOrWord>,
    #[serde(default)]
    header: bool,
    max_train: Option<usize>,
    #[serde(default = "default_split")]
    split_frac: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverEntry {
    name: String,
    loss: String,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default = "default_kernel")]
    kernel: String,
    sigma: Option<NumOrWord>,
    lambda: Option<NumOrWord>,
    #[serde(default = "default_select")]
    select: String,
    #[serde(default = "default_epochs")]
    epochs: usize,
    #[serde(default)]
    standardize: bool,
    #[serde(default = "default_split")]
    split_frac: f64,
}

fn default_format() -> String {
    "csv".into()
}
fn default_mode() -> String {
    "batch".into()
}
fn default_kernel() -> String {
    "linear".into()
}
fn default_select() -> String {
    "ho".into()
}
fn default_epochs() -> usize {
    10
}
fn default_split() -> f64 {
    0.8
}

/// A parsed benchmark: datasets with resolved paths and solver configs.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub seed: u64,
    pub datasets: Vec<BenchDataset>,
    pub solvers: Vec<(String, SolverConfig)>,
}

#[derive(Debug, Clone)]
pub struct BenchDataset {
    pub name: String,
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    pub source: DataSource,
    pub max_train: Option<usize>,
    pub split_frac: f64,
}

impl Benchmark {
    pub fn from_file(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).with_context(|| format!("in manifest {}", path.display()))
    }

    /// Parses manifest text; relative data paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> anyhow::Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| usage(format!("invalid manifest: {e}")))?;
        if m.datasets.is_empty() || m.solvers.is_empty() {
            return Err(usage("manifest needs at least one [[dataset]] and one [[solver]]"));
        }
        let datasets = m
            .datasets
            .into_iter()
            .map(|d| {
                let label = match &d.label_col {
                    None => simplex_core::LabelColumn::Last,
                    Some(v) => parse_label_col(&v.word())?,
                };
                if !(d.split_frac > 0.0 && d.split_frac < 1.0) {
                    return Err(usage(format!("dataset `{}`: split_frac must lie in (0, 1)", d.name)));
                }
                Ok(BenchDataset {
                    train: base.join(&d.train),
                    test: d.test.as_ref().map(|t| base.join(t)),
                    source: DataSource { format: d.format.parse()?, label, header: d.header },
                    max_train: d.max_train,
                    split_frac: d.split_frac,
                    name: d.name,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let solvers = m
            .solvers
            .into_iter()
            .map(|s| {
                let cfg = SolverConfig {
                    loss: s.loss.parse().map_err(|e| usage(format!("solver `{}`: {e}", s.name)))?,
                    mode: s.mode.parse()?,
                    kernel: s.kernel.parse()?,
                    sigma: s.sigma.as_ref().map_or(Ok(Auto::Auto), NumOrWord::to_auto)?,
                    lambda: s.lambda.as_ref().map_or(Ok(Auto::Auto), NumOrWord::to_auto)?,
                    select: s.select.parse()?,
                    split_frac: s.split_frac,
                    epochs: s.epochs,
                    seed: m.seed,
                    standardize: s.standardize,
                    ..SolverConfig::default()
                };
                cfg.validate().with_context(|| format!("solver `{}`", s.name))?;
                Ok((s.name, cfg))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(Self { seed: m.seed, datasets, solvers })
    }

    /// Runs every solver on every dataset. Failures are recorded per cell.
    pub fn run(&self) -> BenchTable {
        let mut cells = vec![Vec::with_capacity(self.datasets.len()); self.solvers.len()];
        for d in &self.datasets {
            match self.load(d) {
                Err(e) => {
                    for row in cells.iter_mut() {
                        row.push(Cell::Failed(format!("{e:#}")));
                    }
                }
                Ok((train_set, test_set)) => {
                    for (row, (_, cfg)) in cells.iter_mut().zip(&self.solvers) {
                        row.push(run_cell(cfg, &train_set, &test_set));
                    }
                }
            }
        }
        BenchTable {
            datasets: self.datasets.iter().map(|d| d.name.clone()).collect(),
            solvers: self.solvers.iter().map(|(n, _)| n.clone()).collect(),
            cells,
        }
    }

    /// Training and test sets of `d` after the optional split and subsample.
    pub fn load(&self, d: &BenchDataset) -> anyhow::Result<(Dataset64, Dataset64)> {
        let full = d.source.load_labeled(&d.train)?;
        let (mut train_set, test_set) = match &d.test {
            Some(t) => {
                let features = Some(full.features());
                let test = d.source.load(t, features).with_context(|| format!("loading {}", t.display()))?;
                let test = test.remap_labels(&full.label_names)?;
                (full, test)
            }
            None => {
                let s = split(&full, &SplitSpec { train_fraction: d.split_frac, seed: self.seed, stratified: true })?;
                (s.train, s.validation)
            }
        };
        if let Some(m) = d.max_train {
            if m == 0 {
                return Err(usage(format!("dataset `{}`: max_train must be positive", d.name)));
            }
            if m < train_set.len() {
                let frac = m as f64 / train_set.len() as f64;
                train_set = split(&train_set, &SplitSpec { train_fraction: frac, seed: self.seed, stratified: true })?.train;
            }
        }
        if test_set.features() != train_set.features() {
            return Err(crate::error::data(format!(
                "dataset `{}`: train has {} features, test has {}",
                d.name,
                train_set.features(),
                test_set.features()
            )));
        }
        Ok((train_set, test_set))
    }
}

fn run_cell(cfg: &SolverConfig, train_set: &Dataset64, test_set: &Dataset64) -> Cell {
    let start = Instant::now();
    let out = train(cfg, train_set).and_then(|(model, report)| {
        let pred = model.predict(&test_set.x)?;
        Ok(CellResult {
            accuracy: 1.0 - error_rate(&pred, &test_set.y),
            lambda: report.lambda,
            sigma: report.sigma,
            selection_rate: report.choice.map(|c| c.rate),
            train_rows: train_set.len(),
            test_rows: test_set.len(),
            seconds: start.elapsed().as_secs_f64(),
        })
    });
    match out {
        Ok(r) => Cell::Done(r),
        Err(e) => Cell::Failed(format!("{e:#}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// Test accuracy in `[0, 1]`.
    pub accuracy: f64,
    pub lambda: f64,
    pub sigma: Option<f64>,
    pub selection_rate: Option<f64>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Done(CellResult),
    Failed(String),
}

/// Rows are solvers, columns datasets.
#[derive(Debug, Clone)]
pub struct BenchTable {
    pub datasets: Vec<String>,
    pub solvers: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl BenchTable {
    pub fn cell(&self, solver: &str, dataset: &str) -> Option<&Cell> {
        let r = self.solvers.iter().position(|s| s == solver)?;
        let c = self.datasets.iter().position(|d| d == dataset)?;
        Some(&self.cells[r][c])
    }

    pub fn accuracy(&self, solver: &str, dataset: &str) -> Option<f64> {
        match self.cell(solver, dataset)? {
            Cell::Done(r) => Some(r.accuracy),
            Cell::Failed(_) => None,
        }
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().flatten().filter(|c| matches!(c, Cell::Failed(_))).count()
    }

    /// Accuracies in percent, `ERROR` for failed cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("solver");
        for d in &self.datasets {
            let _ = write!(s, ",{}", csv_field(d));
        }
        s.push('\n');
        for (name, row) in self.solvers.iter().zip(&self.cells) {
            s.push_str(&csv_field(name));
            for c in row {
                match c {
                    Cell::Done(r) => {
                        let _ = write!(s, ",{:.2}", 100.0 * r.accuracy);
                    }
                    Cell::Failed(_) => s.push_str(",ERROR"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Aligned accuracy table followed by per-cell details.
    pub fn to_text(&self) -> String {
        let first = self.solvers.iter().map(String::len).max().unwrap_or(0).max("solver".len());
        let widths: Vec<usize> = self.datasets.iter().map(|d| d.len().max(7)).collect();
        let mut s = format!("{:<first$}", "solver");
        for (d, w) in self.datasets.iter().zip(&widths) {
            let _ = write!(s, "  {d:>w$}");
        }
        s.push('\n');
        for (name, row) in self.solvers.iter().zip(&self.cells) {
            let _ = write!(s, "{name:<first$}");
            for (c, w) in row.iter().zip(&widths) {
                let v = match c {
                    Cell::Done(r) => format!("{:.2}", 100.0 * r.accuracy),
                    Cell::Failed(_) => "ERROR".into(),
                };
                let _ = write!(s, "  {v:>w$}");
            }
            s.push('\n');
        }
        s.push_str("\ndetails:\n");
        for (name, row) in self.solvers.iter().zip(&self.cells) {
            for (d, c) in self.datasets.iter().zip(row) {
                match c {
                    Cell::Done(r) => {
                        let sigma = r.sigma.map_or("-".into(), |v| format!("{v:.6}"));
                        let rate = r.selection_rate.map_or("-".into(), |v| format!("{v:.4}"));
                        let _ = writeln!(
                            s,
                            "  {name} / {d}: train={} test={} sigma={sigma} lambda={:.3e} selection_rate={rate} seconds={:.2}",
                            r.train_rows, r.test_rows, r.lambda, r.seconds
                        );
                    }
                    Cell::Failed(e) => {
                        let _ = writeln!(s, "  {name} / {d}: ERROR {e}");
                    }
                }
            }
        }
        s
    }
}
