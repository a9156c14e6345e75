//! Dataset loading, splits and feature scaling.
//!
//! Two text formats are read:
//!
//! - delimited rows (comma, or runs of spaces/tabs; detected per file from the
//!   first data line) with one label column and numeric features,
//! - sparse rows `label idx:val idx:val ...`, indices 1-based unless some
//!   index in the file is 0.
//!
//! Label tokens are mapped to classes `0..T` in order of first appearance and
//! kept in [`Dataset::label_names`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    /// `n x p`
    pub x: DMatrix<T>,
    /// Class of each row, in `0..classes`.
    pub y: Vec<usize>,
    pub classes: usize,
    /// Original token of each class.
    pub label_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: DMatrix<T>, y: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
                context: "dataset: one label per row",
            });
        }
        if y.is_empty() {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= label_names.len()) {
            return Err(Error::InvalidData(format!(
                "label {bad} out of range for {} classes",
                label_names.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite_val()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature at row {}",
                i % x.nrows() + 1
            )));
        }
        Ok(Self {
            classes: label_names.len(),
            x,
            y,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx` in that order, keeping the label mapping.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
            label_names: self.label_names.clone(),
        }
    }

    /// Count of rows per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    /// Re-expresses the labels in the mapping `names`, e.g. the one a model
    /// was trained with. Tokens missing from `names` are an error.
    pub fn remap_labels(&self, names: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut y = Vec::with_capacity(self.len());
        for (row, &c) in self.y.iter().enumerate() {
            let token = &self.label_names[c];
            match index.get(token.as_str()) {
                Some(&k) => y.push(k),
                None => {
                    return Err(Error::InvalidData(format!(
                        "row {}: label {token:?} is not one of the known labels",
                        row + 1
                    )))
                }
            }
        }
        Ok(Self {
            x: self.x.clone(),
            y,
            classes: names.len(),
            label_names: names.to_vec(),
        })
    }
}

/// Which column of a delimited file holds the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    /// 0-based column index.
    Index(usize),
    Last,
}

#[derive(Debug, Default)]
struct LabelMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    fn get(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.names.len();
        self.names.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    }
}

fn parse_value<T: Scalar>(token: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} {token:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} {token:?} is not finite")));
    }
    Ok(T::lit(v))
}

/// Reads a delimited file. Blank lines are ignored.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label: LabelColumn, has_header: bool) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    if has_header {
        lines.next();
    }
    let mut comma = None;
    let mut width = None;
    let mut labels = LabelMap::default();
    let mut y = Vec::new();
    let mut values: Vec<T> = Vec::new();
    for (line, content) in lines {
        let comma = *comma.get_or_insert_with(|| content.contains(','));
        let fields: Vec<&str> = if comma {
            content.split(',').map(str::trim).collect()
        } else {
            content.split_whitespace().collect()
        };
        let w = *width.get_or_insert(fields.len());
        if fields.len() != w {
            return Err(parse_err(path, line, format!("expected {w} columns, found {}", fields.len())));
        }
        if w < 2 {
            return Err(parse_err(path, line, "need a label column and at least one feature".into()));
        }
        let lc = match label {
            LabelColumn::Last => w - 1,
            LabelColumn::Index(i) if i < w => i,
            LabelColumn::Index(i) => {
                return Err(parse_err(path, line, format!("label column {i} out of range for {w} columns")))
            }
        };
        for (c, token) in fields.iter().enumerate() {
            if c == lc {
                if token.is_empty() {
                    return Err(parse_err(path, line, "empty label".into()));
                }
                y.push(labels.get(token));
            } else {
                values.push(parse_value(token, path, line, "feature")?);
            }
        }
    }
    let Some(w) = width else {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    };
    let x = DMatrix::from_row_slice(y.len(), w - 1, &values);
    Dataset::new(x, y, labels.names)
}

/// Writes `data` as comma-separated rows with the label token last.
/// Values use the shortest representation that parses back exactly.
pub fn save_csv<T: Scalar>(data: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..data.len() {
        for k in 0..data.features() {
            let _ = write!(out, "{},", data.x[(i, k)]);
        }
        let _ = writeln!(out, "{}", data.label_names[data.y[i]]);
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Overrides for [`load_sparse_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SparseOptions {
    /// Feature count; defaults to the largest index seen.
    pub features: Option<usize>,
    /// Index base; detected from the smallest index when `None`.
    pub zero_based: Option<bool>,
}

pub fn load_sparse<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    load_sparse_with(path, &SparseOptions::default())
}

/// Reads `label idx:val ...` rows; text after `#` is ignored.
pub fn load_sparse_with<T: Scalar>(path: impl AsRef<Path>, opts: &SparseOptions) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut labels = LabelMap::default();
    let mut y = Vec::new();
    let mut rows: Vec<Vec<(usize, T, usize)>> = Vec::new();
    let mut min_index = usize::MAX;
    let mut max_index = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().unwrap_or_default();
        if label.contains(':') {
            return Err(parse_err(path, line, format!("row starts with pair {label:?}, expected a label")));
        }
        y.push(labels.get(label));
        let mut pairs = Vec::new();
        for token in tokens {
            let (idx, val) = token
                .split_once(':')
                .ok_or_else(|| parse_err(path, line, format!("malformed pair {token:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(path, line, format!("malformed index in {token:?}")))?;
            let val = parse_value(val, path, line, "value")?;
            min_index = min_index.min(idx);
            max_index = max_index.max(idx);
            pairs.push((idx, val, line));
        }
        rows.push(pairs);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    let zero_based = opts.zero_based.unwrap_or(min_index == 0);
    let offset = usize::from(!zero_based);
    let seen = if min_index == usize::MAX { 0 } else { max_index + 1 - offset };
    let p = opts.features.unwrap_or(seen);
    let mut x = DMatrix::zeros(rows.len(), p);
    for (r, pairs) in rows.into_iter().enumerate() {
        for (idx, val, line) in pairs {
            if idx < offset || idx - offset >= p {
                return Err(parse_err(path, line, format!("index {idx} outside 1..={p} features")));
            }
            x[(r, idx - offset)] = val;
        }
    }
    Dataset::new(x, y, labels.names)
}

/// Hold-out split settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of rows in the training part, in `(0, 1)`.
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T: Scalar> {
    pub train: Dataset<T>,
    pub validation: Dataset<T>,
    /// Row indices of each part in the original dataset, ascending.
    pub train_idx: Vec<usize>,
    pub validation_idx: Vec<usize>,
    /// Stratification was requested but some class has a single row, so a
    /// plain random split was made instead.
    pub stratification_dropped: bool,
}

/// Deterministic random split. Stratified splits put
/// `round(fraction * n_c)` rows of each class `c` in the training part.
pub fn split<T: Scalar>(data: &Dataset<T>, spec: &SplitSpec) -> Result<Split<T>> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must be in (0, 1), got {f}")));
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = data.class_counts();
    let dropped = spec.stratified && counts.iter().any(|&c| c == 1);
    let mut train_idx = Vec::new();
    let mut validation_idx = Vec::new();
    if spec.stratified && !dropped {
        for class in 0..data.classes {
            let mut members: Vec<usize> = (0..n).filter(|&i| data.y[i] == class).collect();
            members.shuffle(&mut rng);
            let k = (f * members.len() as f64).round() as usize;
            train_idx.extend_from_slice(&members[..k]);
            validation_idx.extend_from_slice(&members[k..]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let k = (f * n as f64).round() as usize;
        train_idx.extend_from_slice(&all[..k]);
        validation_idx.extend_from_slice(&all[k..]);
    }
    if train_idx.is_empty() || validation_idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split of {n} rows at fraction {f} leaves an empty part"
        )));
    }
    train_idx.sort_unstable();
    validation_idx.sort_unstable();
    Ok(Split {
        train: data.subset(&train_idx),
        validation: data.subset(&validation_idx),
        train_idx,
        validation_idx,
        stratification_dropped: dropped,
    })
}

/// Per-feature affine map `x -> (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T: Scalar> {
    pub mean: Vec<T>,
    /// Standard deviation, or 1 for constant features.
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Fits mean and (population) standard deviation on the rows of `x`.
    pub fn fit(x: &DMatrix<T>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("cannot standardize an empty matrix".into()));
        }
        let n = T::count(x.nrows());
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().fold(T::zero(), |s, &v| s + (v - m) * (v - m)) / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > T::zero() { sd } else { T::one() });
        }
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.ncols(),
                context: "standardize: feature count",
            });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| (x[(i, k)] - self.mean[k]) / self.scale[k]))
    }
}

/// Standardizes `train` and applies the same map to each of `others`.
pub fn standardize<T: Scalar>(
    train: &Dataset<T>,
    others: &[&Dataset<T>],
) -> Result<(Dataset<T>, Vec<Dataset<T>>, Standardizer<T>)> {
    let map = Standardizer::fit(&train.x)?;
    let mut t = train.clone();
    t.x = map.apply(&train.x)?;
    let rest = others
        .iter()
        .map(|d| {
            let mut d = (*d).clone();
            d.x = map.apply(&d.x)?;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((t, rest, map))
}
