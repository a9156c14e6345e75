use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use simplex_core::data::{load_csv, load_sparse_with, SparseOptions};
use simplex_core::{Dataset64, LabelColumn};

use crate::error::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Sparse,
}

impl FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "sparse" | "libsvm" => Ok(Format::Sparse),
            other => Err(usage(format!("unknown data format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Sparse => "sparse",
        })
    }
}

/// `last` or a 0-based column index.
pub fn parse_label_col(s: &str) -> anyhow::Result<LabelColumn> {
    if s.eq_ignore_ascii_case("last") {
        return Ok(LabelColumn::Last);
    }
    s.parse()
        .map(LabelColumn::Index)
        .map_err(|_| usage(format!("label column must be `last` or a 0-based index, got `{s}`")))
}

/// Where and how to read a labeled data file.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub format: Format,
    pub label: LabelColumn,
    pub header: bool,
}

impl Default for DataSource {
    fn default() -> Self {
        Self { format: Format::Csv, label: LabelColumn::Last, header: false }
    }
}

impl DataSource {
    /// Loads `path`. For sparse files `features` fixes the width, e.g. to
    /// match a trained model.
    pub fn load(&self, path: &Path, features: Option<usize>) -> anyhow::Result<Dataset64> {
        let d = match self.format {
            Format::Csv => load_csv(path, self.label, self.header)?,
            Format::Sparse => load_sparse_with(path, &SparseOptions { features, zero_based: None })?,
        };
        Ok(d)
    }

    pub fn load_labeled(&self, path: &Path) -> anyhow::Result<Dataset64> {
        self.load(path, None).with_context(|| format!("loading {}", path.display()))
    }
}
