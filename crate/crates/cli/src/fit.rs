use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use simplex_core::data::{split, Standardizer};
use simplex_core::online::train_online;
use simplex_core::srls::{
    error_rate, fit_kernel, kernel_objective, lambda_grid, linear_objective, loo_errors, reg_path,
    reg_path_linear, select_lambda_loo, select_min_rate, RegPath,
};
use simplex_core::svm_qp::{fit_sc_svm, fit_sh_svm};
use simplex_core::{
    cross_gram, gram, rbf_sigma_heuristic, CodeBook64, Dataset64, GramMatrix64, KernelModel64, KernelSpec64,
    LossKind, Model64, OnlineOptions, Scalar, SplitSpec,
};

use crate::artifact::ModelArtifact;
use crate::config::{Auto, KernelChoice, Mode, Selection, SolverConfig};
use crate::error::{data, usage};

/// How `lambda` was obtained and the rate that justified it.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaChoice {
    pub select: Selection,
    pub lambda: f64,
    /// Leave-one-out or validation error rate at `lambda`.
    pub rate: f64,
    /// The searched grid and its rates; empty for a fixed `lambda`.
    pub lambdas: Vec<f64>,
    pub rates: Vec<f64>,
    /// The validation split could not be stratified.
    pub stratification_dropped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub solver: String,
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
    pub kernel: KernelChoice,
    pub sigma: Option<f64>,
    pub lambda: f64,
    pub choice: Option<LambdaChoice>,
    /// Regularized empirical risk of the final model on the training rows.
    pub objective: f64,
    pub train_accuracy: f64,
    pub converged: Option<bool>,
    pub sweeps: Option<usize>,
    pub seconds: f64,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "solver: {}", self.solver)?;
        writeln!(f, "rows: {}", self.rows)?;
        writeln!(f, "features: {}", self.features)?;
        writeln!(f, "classes: {}", self.classes)?;
        writeln!(f, "kernel: {}", self.kernel)?;
        if let Some(s) = self.sigma {
            writeln!(f, "sigma: {s:?}")?;
        }
        writeln!(f, "lambda: {:?}", self.lambda)?;
        if let Some(c) = &self.choice {
            let what = match c.select {
                Selection::Loo => "loo_rate",
                Selection::Ho => "validation_rate",
            };
            writeln!(f, "{what}: {:?}", c.rate)?;
            if !c.lambdas.is_empty() {
                writeln!(f, "lambda_grid: {} values in [{:e}, {:e}]", c.lambdas.len(), c.lambdas[c.lambdas.len() - 1], c.lambdas[0])?;
            }
            if c.stratification_dropped {
                writeln!(f, "warning: validation split is not stratified (a class has a single row)")?;
            }
        }
        writeln!(f, "objective: {:?}", self.objective)?;
        writeln!(f, "train_accuracy: {:?}", self.train_accuracy)?;
        if let Some(c) = self.converged {
            writeln!(f, "converged: {c}")?;
        }
        if let Some(s) = self.sweeps {
            writeln!(f, "sweeps: {s}")?;
        }
        write!(f, "seconds: {:.3}", self.seconds)
    }
}

/// Features after optional standardization plus the kernel to use on them.
struct Prepared {
    data: Dataset64,
    scaler: Option<Standardizer<f64>>,
    kernel: KernelSpec64,
    sigma: Option<f64>,
    cb: CodeBook64,
}

fn prepare(cfg: &SolverConfig, raw: &Dataset64) -> anyhow::Result<Prepared> {
    cfg.validate()?;
    if raw.classes < 2 {
        return Err(data(format!("training data needs at least 2 classes, found {}", raw.classes)));
    }
    let mut d = raw.clone();
    let scaler = if cfg.standardize {
        let s = Standardizer::fit(&raw.x)?;
        d.x = s.apply(&raw.x)?;
        Some(s)
    } else {
        None
    };
    let (kernel, sigma) = match cfg.kernel {
        KernelChoice::Linear => (KernelSpec64::Linear, None),
        KernelChoice::Rbf => {
            let s = match cfg.sigma {
                Auto::Value(s) => s,
                Auto::Auto => rbf_sigma_heuristic(&d.x)?,
            };
            (KernelSpec64::rbf(s)?, Some(s))
        }
    };
    let cb = CodeBook64::new(d.classes)?;
    Ok(Prepared { data: d, scaler, kernel, sigma, cb })
}

fn choice(select: Selection, lambdas: Vec<f64>, rates: Vec<f64>, dropped: bool) -> anyhow::Result<LambdaChoice> {
    let i = select_min_rate(&lambdas, &rates).ok_or_else(|| usage("empty lambda grid"))?;
    Ok(LambdaChoice {
        select,
        lambda: lambdas[i],
        rate: rates[i],
        lambdas,
        rates,
        stratification_dropped: dropped,
    })
}

fn s_ls_path(p: &Prepared, x: &DMatrix<f64>, y: &[usize]) -> anyhow::Result<RegPath<f64>> {
    Ok(match p.kernel {
        KernelSpec64::Linear => reg_path_linear(x, y, &p.cb)?,
        spec => reg_path(&gram(&spec, x)?.k, y, &p.cb)?,
    })
}

fn split_spec(cfg: &SolverConfig) -> SplitSpec {
    SplitSpec {
        train_fraction: cfg.split_frac,
        seed: cfg.seed,
        stratified: true,
    }
}

/// Runs the search over the default grid. For leave-one-out the path on all
/// rows is returned as well so the final model can reuse it.
fn search(cfg: &SolverConfig, p: &Prepared) -> anyhow::Result<(LambdaChoice, Option<RegPath<f64>>)> {
    if cfg.select == Selection::Loo {
        let path = s_ls_path(p, &p.data.x, &p.data.y)?;
        let (lambda, rate) = select_lambda_loo(&path).ok_or_else(|| usage("empty lambda grid"))?;
        let c = LambdaChoice {
            select: Selection::Loo,
            lambda,
            rate,
            lambdas: path.lambdas.clone(),
            rates: path.loo_rates.clone(),
            stratification_dropped: false,
        };
        return Ok((c, Some(path)));
    }
    let parts = split(&p.data, &split_spec(cfg))?;
    let (tr, va) = (&parts.train, &parts.validation);
    let dropped = parts.stratification_dropped;
    let opts = OnlineOptions { epochs: cfg.epochs, seed: cfg.seed, ..OnlineOptions::default() };
    let c = match (cfg.loss, cfg.mode) {
        (LossKind::SLs, Mode::Batch) => {
            let path = s_ls_path(p, &tr.x, &tr.y)?;
            let cross = cross_gram(&p.kernel, &tr.x, &va.x)?;
            let rates = path.holdout_rates(&cross, &va.y)?;
            choice(Selection::Ho, path.lambdas.clone(), rates, dropped)?
        }
        (loss, Mode::Batch) => {
            let g = gram(&p.kernel, &tr.x)?;
            let spectrum = f64::symmetric_eigenvalues(&g.k).ok_or_else(|| {
                simplex_core::Error::Numerical("eigenvalues of the training kernel did not converge".into())
            })?;
            let grid = lambda_grid(spectrum.as_slice())?;
            let cross = cross_gram(&p.kernel, &tr.x, &va.x)?;
            let rates = grid
                .par_iter()
                .map(|&l| {
                    let model = fit_svm(cfg, loss, &g, &tr.x, &tr.y, &p.cb, l)?.0;
                    let pred = p.cb.decode_batch(&model.predict_from_kernel(&cross)?)?;
                    Ok(error_rate(&pred, &va.y))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            choice(Selection::Ho, grid, rates, dropped)?
        }
        (loss, Mode::Online) => {
            let grid = lambda_grid(&linear_spectrum(&tr.x))?;
            let rates = grid
                .par_iter()
                .map(|&l| {
                    let model = train_online(&tr.x, &tr.y, &p.cb, l, loss, &opts)?;
                    Ok(error_rate(&model.classify(&va.x)?, &va.y))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            choice(Selection::Ho, grid, rates, dropped)?
        }
    };
    Ok((c, None))
}

/// Eigenvalues of `X X^T`: the squared singular values of `X`, plus zero when
/// there are more rows than the rank.
fn linear_spectrum(x: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = x.singular_values().iter().map(|v| v * v).collect();
    if x.nrows() > s.len() {
        s.push(0.0);
    }
    s
}

type SvmFit = (KernelModel64, bool, usize);

fn fit_svm(
    cfg: &SolverConfig,
    loss: LossKind,
    g: &GramMatrix64,
    x: &DMatrix<f64>,
    y: &[usize],
    cb: &CodeBook64,
    lambda: f64,
) -> anyhow::Result<SvmFit> {
    Ok(match loss {
        LossKind::ScSvm => {
            let (d, m) = fit_sc_svm(g, x, y, cb, lambda, &cfg.qp)?;
            (m, d.converged, d.sweeps)
        }
        LossKind::ShSvm => {
            let (d, m) = fit_sh_svm(g, x, y, cb, lambda, &cfg.qp)?;
            (m, d.converged, d.sweeps)
        }
        LossKind::SLs => unreachable!("S-LS is not fitted through the dual solver"),
    })
}

/// Fits the configured solver on all rows of `raw`.
pub fn train(cfg: &SolverConfig, raw: &Dataset64) -> anyhow::Result<(ModelArtifact, TrainReport)> {
    let start = Instant::now();
    let p = prepare(cfg, raw)?;
    let (x, y) = (&p.data.x, &p.data.y);
    let (mut choice, path) = match cfg.lambda {
        Auto::Auto => {
            let (c, path) = search(cfg, &p)?;
            (Some(c), path)
        }
        Auto::Value(_) => (None, None),
    };
    let lambda = match (&choice, cfg.lambda) {
        (Some(c), _) => c.lambda,
        (None, Auto::Value(l)) => l,
        (None, Auto::Auto) => unreachable!(),
    };

    let (model, objective, converged, sweeps): (Model64, f64, Option<bool>, Option<usize>) = match (cfg.loss, cfg.mode) {
        (_, Mode::Online) => {
            let opts = OnlineOptions { epochs: cfg.epochs, seed: cfg.seed, ..OnlineOptions::default() };
            let m = train_online(x, y, &p.cb, lambda, cfg.loss, &opts)?;
            let obj = linear_objective(&m, x, y, cfg.loss)?;
            (m.into(), obj, None, None)
        }
        (LossKind::SLs, Mode::Batch) => {
            let g = gram(&p.kernel, x)?;
            let m = match &path {
                Some(path) => path.model_at(lambda, x, p.kernel)?,
                None => fit_kernel(&g, x, y, &p.cb, lambda)?,
            };
            if choice.is_none() && cfg.select == Selection::Loo {
                let rate = loo_errors(&g.k, y, &p.cb, lambda)?.rate;
                choice = Some(LambdaChoice {
                    select: Selection::Loo,
                    lambda,
                    rate,
                    lambdas: Vec::new(),
                    rates: Vec::new(),
                    stratification_dropped: false,
                });
            }
            let obj = kernel_objective(&m, &g.k, y, cfg.loss)?;
            (m.into(), obj, None, None)
        }
        (loss, Mode::Batch) => {
            let g = gram(&p.kernel, x)?;
            let (m, conv, sw) = fit_svm(cfg, loss, &g, x, y, &p.cb, lambda)?;
            let obj = kernel_objective(&m, &g.k, y, loss)?;
            (m.into(), obj, Some(conv), Some(sw))
        }
    };
    let artifact = ModelArtifact {
        loss: cfg.loss,
        mode: cfg.mode,
        label_names: raw.label_names.clone(),
        scaler: p.scaler.clone(),
        model,
    };
    let predicted = artifact.predict(&raw.x)?;
    let report = TrainReport {
        solver: cfg.solver_name(),
        rows: raw.len(),
        features: raw.features(),
        classes: raw.classes,
        kernel: cfg.kernel,
        sigma: p.sigma,
        lambda,
        choice,
        objective,
        train_accuracy: 1.0 - error_rate(&predicted, &raw.y),
        converged,
        sweeps,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((artifact, report))
}

/// The S-LS regularization path: leave-one-out rates on all rows, or
/// validation rates of the path fitted on the training part of a split.
pub fn s_ls_rates(cfg: &SolverConfig, raw: &Dataset64) -> anyhow::Result<LambdaChoice> {
    if !(cfg.loss == LossKind::SLs && cfg.mode == Mode::Batch) {
        return Err(usage(format!("the regularization path is only available for s-ls-batch, not {}", cfg.solver_name())));
    }
    let p = prepare(cfg, raw)?;
    Ok(search(cfg, &p)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, seed: u64) -> Dataset64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(0.0, 3.0), (-2.6, -1.5), (2.6, -1.5)];
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(n, 2, |i, k| {
            let c = centers[y[i]];
            (if k == 0 { c.0 } else { c.1 }) + rng.random_range(-0.8..0.8)
        });
        Dataset64::new(x, y, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn every_solver_fits_separable_blobs() {
        let d = blobs(60, 1);
        for loss in LossKind::ALL {
            for mode in [Mode::Batch, Mode::Online] {
                let lambda = if mode == Mode::Online { 0.1 } else { 1e-2 };
                let cfg = SolverConfig { loss, mode, lambda: Auto::Value(lambda), ..Default::default() };
                let (a, r) = train(&cfg, &d).unwrap();
                assert!(r.train_accuracy >= 0.99, "{}: {}", r.solver, r.train_accuracy);
                assert_eq!(a.classes(), 3);
                assert!(r.objective.is_finite());
            }
        }
    }

    #[test]
    fn loo_selection_reuses_the_path_minimum() {
        let d = blobs(45, 2);
        let cfg = SolverConfig { select: Selection::Loo, kernel: KernelChoice::Rbf, ..Default::default() };
        let (_, r) = train(&cfg, &d).unwrap();
        let c = r.choice.unwrap();
        assert_eq!(c.lambdas.len(), 100);
        let min = c.rates.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(c.rate, min);
        assert!(r.sigma.unwrap() > 0.0);
    }

    #[test]
    fn fixed_lambda_loo_rate_matches_the_path() {
        let d = blobs(30, 3);
        let cfg = SolverConfig { select: Selection::Loo, ..Default::default() };
        let table = s_ls_rates(&cfg, &d).unwrap();
        for i in [0, 37, 99] {
            let fixed = SolverConfig { lambda: Auto::Value(table.lambdas[i]), ..cfg.clone() };
            let (_, r) = train(&fixed, &d).unwrap();
            assert_eq!(r.choice.unwrap().rate, table.rates[i]);
        }
    }

    #[test]
    fn single_class_data_is_rejected() {
        let d = Dataset64::new(DMatrix::zeros(3, 1), vec![0; 3], vec!["only".into()]).unwrap();
        let e = train(&SolverConfig::default(), &d).unwrap_err();
        assert_eq!(crate::error::exit_for(&e), crate::error::Exit::Data);
    }

    #[test]
    fn holdout_search_is_deterministic() {
        let d = blobs(40, 4);
        for (loss, mode) in [(LossKind::ShSvm, Mode::Online), (LossKind::SLs, Mode::Batch)] {
            let cfg = SolverConfig { loss, mode, seed: 5, ..Default::default() };
            let a = train(&cfg, &d).unwrap().1.choice.unwrap();
            let b = train(&cfg, &d).unwrap().1.choice.unwrap();
            assert_eq!(a, b);
            assert_eq!(a.lambdas.len(), 100);
        }
    }
}
