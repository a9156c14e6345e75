use std::fmt;
use std::str::FromStr;

use simplex_core::{LossKind, QpOptions};

use crate::error::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Batch,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Hold-out validation split.
    Ho,
    /// Closed-form leave-one-out.
    Loo,
}

/// A positive value given explicitly or chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto {
    Auto,
    Value(f64),
}

macro_rules! keyword_enum {
    ($t:ty, $what:literal, $($name:literal => $v:expr),+) => {
        impl FromStr for $t {
            type Err = anyhow::Error;
            fn from_str(s: &str) -> anyhow::Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($v),)+
                    other => Err(usage(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(Mode, "mode", "batch" => Mode::Batch, "online" => Mode::Online);
keyword_enum!(KernelChoice, "kernel", "linear" => KernelChoice::Linear, "rbf" => KernelChoice::Rbf);
keyword_enum!(Selection, "selection mode", "ho" => Selection::Ho, "loo" => Selection::Loo);

impl FromStr for Auto {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Auto::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| usage(format!("expected `auto` or a number, got `{s}`")))?;
        Ok(Auto::Value(v))
    }
}

impl fmt::Display for Auto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Everything needed to fit one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub loss: LossKind,
    pub mode: Mode,
    pub kernel: KernelChoice,
    pub sigma: Auto,
    pub lambda: Auto,
    pub select: Selection,
    pub split_frac: f64,
    pub epochs: usize,
    pub seed: u64,
    pub standardize: bool,
    pub qp: QpOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::SLs,
            mode: Mode::Batch,
            kernel: KernelChoice::Linear,
            sigma: Auto::Auto,
            lambda: Auto::Auto,
            select: Selection::Ho,
            split_frac: 0.8,
            epochs: 10,
            seed: 0,
            standardize: false,
            qp: QpOptions::default(),
        }
    }
}

impl SolverConfig {
    /// `s-ls-batch`, `sc-svm`, `sh-svm-online`, ...
    pub fn solver_name(&self) -> String {
        solver_name(self.loss, self.mode)
    }

    /// Rejects combinations that cannot be run.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.select == Selection::Loo && !(self.loss == LossKind::SLs && self.mode == Mode::Batch) {
            return Err(usage(format!(
                "leave-one-out selection is only available for s-ls-batch, not {}",
                self.solver_name()
            )));
        }
        if self.mode == Mode::Online && self.kernel == KernelChoice::Rbf {
            return Err(usage("online solvers train linear models; use --kernel linear"));
        }
        if let Auto::Value(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(usage(format!("lambda must be positive, got {l}")));
            }
        }
        if let Auto::Value(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(usage(format!("sigma must be positive, got {s}")));
            }
        }
        if !(self.split_frac > 0.0 && self.split_frac < 1.0) {
            return Err(usage(format!("split fraction must lie in (0, 1), got {}", self.split_frac)));
        }
        if self.epochs == 0 {
            return Err(usage("epochs must be at least 1"));
        }
        Ok(())
    }
}

pub fn solver_name(loss: LossKind, mode: Mode) -> String {
    match (loss, mode) {
        (LossKind::SLs, m) => format!("s-ls-{m}"),
        (l, Mode::Batch) => l.to_string(),
        (l, Mode::Online) => format!("{l}-online"),
    }
}

/// Inverse of [`solver_name`].
pub fn parse_solver(s: &str) -> anyhow::Result<(LossKind, Mode)> {
    let (loss, mode) = match s.strip_suffix("-online") {
        Some(l) => (l, Mode::Online),
        None => match s.strip_suffix("-batch") {
            Some(l) => (l, Mode::Batch),
            None => (s, Mode::Batch),
        },
    };
    let loss: LossKind = loss.parse().map_err(|_| usage(format!("unknown solver `{s}`")))?;
    Ok((loss, mode))
}
