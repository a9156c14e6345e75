//! Versioned plain-text model files.
//!
//! ```text
//! simplex-model 1
//! loss sh-svm
//! mode batch
//! lambda 0.001
//! classes 3
//! label setosa
//! label versicolor
//! label virginica
//! features 4
//! scaler none
//! form kernel
//! kernel rbf 0.75
//! train 120 4
//! <120 rows of 4 values>
//! coef 120 2
//! <120 rows of 2 values>
//! end
//! ```
//!
//! Online models use `form linear` followed by `weights <T-1> <features>`.
//! With `scaler standard` two lines `mean ...` and `scale ...` follow.
//! Numbers are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use nalgebra::DMatrix;
use simplex_core::data::Standardizer;
use simplex_core::{CodeBook64, KernelModel64, KernelSpec, LinearModel64, LossKind, Model64};

use crate::config::Mode;
use crate::error::data;

pub const MAGIC: &str = "simplex-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub loss: LossKind,
    pub mode: Mode,
    pub label_names: Vec<String>,
    /// Applied to raw features before the model sees them.
    pub scaler: Option<Standardizer<f64>>,
    pub model: Model64,
}

impl ModelArtifact {
    pub fn classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> usize {
        self.model.features()
    }

    /// Class indices for the rows of raw features `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> anyhow::Result<Vec<usize>> {
        if x.ncols() != self.features() {
            return Err(data(format!(
                "model expects {} features, data has {}",
                self.features(),
                x.ncols()
            )));
        }
        let out = match &self.scaler {
            Some(s) => self.model.classify(&s.apply(x)?)?,
            None => self.model.classify(x)?,
        };
        Ok(out)
    }

    /// Label tokens for the rows of `x`.
    pub fn predict_labels(&self, x: &DMatrix<f64>) -> anyhow::Result<Vec<&str>> {
        Ok(self.predict(x)?.into_iter().map(|c| self.label_names[c].as_str()).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "loss {}", self.loss);
        let _ = writeln!(s, "mode {}", self.mode);
        let _ = writeln!(s, "lambda {:?}", self.model.lambda());
        let _ = writeln!(s, "classes {}", self.classes());
        for name in &self.label_names {
            let _ = writeln!(s, "label {name}");
        }
        let _ = writeln!(s, "features {}", self.features());
        match &self.scaler {
            None => s.push_str("scaler none\n"),
            Some(sc) => {
                s.push_str("scaler standard\n");
                let _ = writeln!(s, "mean {}", join(&sc.mean));
                let _ = writeln!(s, "scale {}", join(&sc.scale));
            }
        }
        match &self.model {
            Model64::Kernel(m) => {
                s.push_str("form kernel\n");
                match m.kernel {
                    KernelSpec::Linear => s.push_str("kernel linear\n"),
                    KernelSpec::Rbf { sigma } => {
                        let _ = writeln!(s, "kernel rbf {sigma:?}");
                    }
                }
                write_matrix(&mut s, "train", &m.train);
                write_matrix(&mut s, "coef", &m.coef);
            }
            Model64::Linear(m) => {
                s.push_str("form linear\n");
                write_matrix(&mut s, "weights", &m.weights);
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).with_context(|| format!("writing model to {}", path.display()))
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
        Self::from_text(&text).with_context(|| format!("parsing model {}", path.display()))
    }

    pub fn from_text(text: &str) -> anyhow::Result<Self> {
        let mut r = Reader { lines: text.lines().enumerate() };
        let version: u32 = r.field(MAGIC)?;
        if version != VERSION {
            return Err(data(format!("unsupported model format version {version}")));
        }
        let loss: LossKind = r.field::<String>("loss")?.parse()?;
        let mode: Mode = r.field::<String>("mode")?.parse()?;
        let lambda: f64 = r.field("lambda")?;
        let classes: usize = r.field("classes")?;
        let label_names = (0..classes).map(|_| r.rest("label")).collect::<anyhow::Result<Vec<_>>>()?;
        let features: usize = r.field("features")?;
        let scaler = match r.rest("scaler")?.as_str() {
            "none" => None,
            "standard" => {
                let mean = r.values("mean", features)?;
                let scale = r.values("scale", features)?;
                Some(Standardizer { mean, scale })
            }
            other => return Err(data(format!("unknown scaler `{other}`"))),
        };
        let cb = CodeBook64::new(classes)?;
        let model = match r.rest("form")?.as_str() {
            "kernel" => {
                let spec = r.rest("kernel")?;
                let kernel = match spec.split_whitespace().collect::<Vec<_>>().as_slice() {
                    ["linear"] => KernelSpec::Linear,
                    ["rbf", sigma] => KernelSpec::rbf(num(sigma)?)?,
                    _ => return Err(data(format!("bad kernel line `{spec}`"))),
                };
                let train = r.matrix("train")?;
                let coef = r.matrix("coef")?;
                Model64::Kernel(KernelModel64::new(coef, train, kernel, cb, lambda)?)
            }
            "linear" => Model64::Linear(LinearModel64::new(r.matrix("weights")?, cb, lambda)?),
            other => return Err(data(format!("unknown model form `{other}`"))),
        };
        if model.features() != features {
            return Err(data(format!(
                "header declares {features} features, model has {}",
                model.features()
            )));
        }
        r.rest("end")?;
        Ok(Self { loss, mode, label_names, scaler, model })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn write_matrix(s: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(s, "{name} {} {}", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let v: Vec<f64> = row.iter().copied().collect();
        let _ = writeln!(s, "{}", join(&v));
    }
}

fn num(tok: &str) -> anyhow::Result<f64> {
    tok.parse().map_err(|_| data(format!("not a number: `{tok}`")))
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl Reader<'_> {
    fn next(&mut self) -> anyhow::Result<(usize, &str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| data("model file ends early"))
    }

    /// Text after `key ` on the next line.
    fn rest(&mut self, key: &str) -> anyhow::Result<String> {
        let (no, line) = self.next()?;
        match line.strip_prefix(key) {
            Some("") => Ok(String::new()),
            Some(rest) if rest.starts_with(' ') => Ok(rest[1..].to_string()),
            _ => Err(data(format!("line {no}: expected `{key}`, found `{line}`"))),
        }
    }

    fn field<V: std::str::FromStr>(&mut self, key: &str) -> anyhow::Result<V> {
        let v = self.rest(key)?;
        v.trim().parse().map_err(|_| data(format!("bad value `{v}` for `{key}`")))
    }

    fn row(&mut self, len: usize) -> anyhow::Result<Vec<f64>> {
        let (no, line) = self.next()?;
        let v = line.split_whitespace().map(num).collect::<anyhow::Result<Vec<_>>>()?;
        if v.len() != len {
            return Err(data(format!("line {no}: expected {len} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn values(&mut self, key: &str, len: usize) -> anyhow::Result<Vec<f64>> {
        let rest = self.rest(key)?;
        let v = rest.split_whitespace().map(num).collect::<anyhow::Result<Vec<_>>>()?;
        if v.len() != len {
            return Err(data(format!("`{key}`: expected {len} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn matrix(&mut self, key: &str) -> anyhow::Result<DMatrix<f64>> {
        let dims = self.rest(key)?;
        let (rows, cols) = match dims.split_whitespace().collect::<Vec<_>>().as_slice() {
            [r, c] => (
                r.parse::<usize>().map_err(|_| data(format!("bad `{key}` size `{dims}`")))?,
                c.parse::<usize>().map_err(|_| data(format!("bad `{key}` size `{dims}`")))?,
            ),
            _ => return Err(data(format!("bad `{key}` size `{dims}`"))),
        };
        let mut flat = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            flat.extend(self.row(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &flat))
    }
}
