//! Dual training of the simplex SVMs by cyclic coordinate ascent.
//!
//! SC-SVM keeps one dual variable `alpha[i][y]` per hinge term, i.e. per
//! `y != y_i`, in the box `[0, C0]` with `C0 = 1 / (2 n lambda)`, and
//! maximizes
//!
//! ```text
//! -1/2 sum alpha[i][y] K[i][j] G[y][y'] alpha[j][y'] + 1/(T-1) sum alpha[i][y]
//! ```
//!
//! The representer coefficients are `a_i = -sum_{y != y_i} alpha[i][y] c_y`.
//! `alpha[i][y_i]` is pinned at zero.
//!
//! SH-SVM without the convex hull constraint has one variable per point and
//! maximizes `-1/2 sum alpha_i K_ij G[y_i][y_j] alpha_j + sum alpha_i` over the
//! same box, with coefficients `a_i = alpha_i c_{y_i}`.
//!
//! Both solvers update one coordinate at a time to its exact box-clipped
//! optimum, visiting points in ascending order and, for SC-SVM, classes in
//! ascending order within a point.

use nalgebra::{DMatrix, DVector};

use crate::coding::{dot, CodeBook};
use crate::error::{check_dim, Error, Result};
use crate::kernels::GramMatrix;
use crate::losses::margin_constant;
use crate::scalar::Scalar;
use crate::srls::KernelModel;

const DEGENERATE_CURVATURE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Stop once the largest KKT violation is at most this.
    pub tol: f64,
    /// Cap on full sweeps; `None` means `10 * n * T`.
    pub max_sweeps: Option<usize>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: None,
        }
    }
}

/// Dual iterate of the SC-SVM problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScSvmDual<T: Scalar> {
    /// `n x T`; the entry at each point's own label stays zero.
    pub alpha: DMatrix<T>,
    pub c0: T,
    pub objective: T,
    pub converged: bool,
    pub sweeps: usize,
    /// Dual objective after every sweep.
    pub trace: Vec<T>,
}

/// Dual iterate of the hull-free SH-SVM problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ShSvmDual<T: Scalar> {
    pub alpha: DVector<T>,
    pub c0: T,
    pub objective: T,
    pub converged: bool,
    pub sweeps: usize,
    pub trace: Vec<T>,
}

/// `1 / (2 n lambda)`
pub fn box_bound<T: Scalar>(n: usize, lambda: T) -> T {
    T::one() / (T::lit(2.0) * T::count(n) * lambda)
}

fn validate<T: Scalar>(
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    opts: &QpOptions,
) -> Result<()> {
    check_dim(k.nrows(), k.ncols(), "QP: kernel matrix must be square")?;
    check_dim(k.nrows(), labels.len(), "QP: one label per kernel row")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("QP: empty training set".into()));
    }
    cb.check_labels(labels)?;
    if !(lambda > T::zero()) || !lambda.is_finite_val() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    if k.iter().any(|v| !v.is_finite_val()) {
        return Err(Error::Numerical("QP: kernel matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Exact maximizer of `g d - curv d^2 / 2` over `old + d` in `[0, c0]`.
fn coordinate_step<T: Scalar>(old: T, grad: T, curv: T, c0: T) -> T {
    if curv <= T::lit(DEGENERATE_CURVATURE) {
        if grad > T::zero() {
            c0
        } else if grad < T::zero() {
            T::zero()
        } else {
            old
        }
    } else {
        (old + grad / curv).max(T::zero()).min(c0)
    }
}

/// Violation of the box KKT conditions for one coordinate with gradient
/// `grad` (of the maximized objective).
fn violation<T: Scalar>(value: T, grad: T, c0: T) -> T {
    if value <= T::zero() {
        grad.max(T::zero())
    } else if value >= c0 {
        (-grad).max(T::zero())
    } else {
        grad.abs()
    }
}

// -- SC-SVM ----------------------------------------------------------------

/// `f(x_i) = sum_j K_ij a_j` for the current SC-SVM iterate, `n x (T-1)`.
fn sc_outputs<T: Scalar>(k: &DMatrix<T>, alpha: &DMatrix<T>, cb: &CodeBook<T>) -> DMatrix<T> {
    k * sc_coefficients(alpha, cb)
}

/// `a_i = -sum_y alpha[i][y] c_y`, i.e. `-alpha * codes^T`.
fn sc_coefficients<T: Scalar>(alpha: &DMatrix<T>, cb: &CodeBook<T>) -> DMatrix<T> {
    -(alpha * cb.code_matrix().transpose())
}

fn sc_objective<T: Scalar>(alpha: &DMatrix<T>, outputs: &DMatrix<T>, cb: &CodeBook<T>) -> T {
    // quadratic term: sum alpha_i^y <c_y, -f(x_i)>
    let margin = margin_constant(cb);
    let mut linear = T::zero();
    let mut quad = T::zero();
    let mut f = vec![T::zero(); cb.dim()];
    for i in 0..alpha.nrows() {
        for (k, v) in f.iter_mut().enumerate() {
            *v = outputs[(i, k)];
        }
        for y in 0..cb.classes() {
            let a = alpha[(i, y)];
            if a != T::zero() {
                linear += a;
                quad -= a * dot(cb.code(y), &f);
            }
        }
    }
    margin * linear - quad / T::lit(2.0)
}

fn sc_max_violation<T: Scalar>(
    alpha: &DMatrix<T>,
    outputs: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    c0: T,
) -> T {
    let margin = margin_constant(cb);
    let mut worst = T::zero();
    let mut f = vec![T::zero(); cb.dim()];
    for (i, &yi) in labels.iter().enumerate() {
        for (k, v) in f.iter_mut().enumerate() {
            *v = outputs[(i, k)];
        }
        for y in (0..cb.classes()).filter(|&y| y != yi) {
            let grad = margin + dot(cb.code(y), &f);
            worst = worst.max(violation(alpha[(i, y)], grad, c0));
        }
    }
    worst
}

/// Trains SC-SVM on the Gram matrix `gram` of the points `train`.
pub fn fit_sc_svm<T: Scalar>(
    gram: &GramMatrix<T>,
    train: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    opts: &QpOptions,
) -> Result<(ScSvmDual<T>, KernelModel<T>)> {
    check_dim(gram.n(), train.nrows(), "fit_sc_svm: gram size vs training points")?;
    let dual = solve_sc_dual(&gram.k, labels, cb, lambda, opts)?;
    let model = KernelModel::new(
        sc_coefficients(&dual.alpha, cb),
        train.clone(),
        gram.spec,
        cb.clone(),
        lambda,
    )?;
    Ok((dual, model))
}

/// Solves the SC-SVM dual on a bare kernel matrix.
pub fn solve_sc_dual<T: Scalar>(
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    opts: &QpOptions,
) -> Result<ScSvmDual<T>> {
    validate(k, labels, cb, lambda, opts)?;
    let n = labels.len();
    let classes = cb.classes();
    let c0 = box_bound(n, lambda);
    let tol = T::lit(opts.tol);
    let margin = margin_constant(cb);
    let max_sweeps = opts.max_sweeps.unwrap_or(10 * n * classes);

    let mut alpha = DMatrix::<T>::zeros(n, classes);
    // f(x_i) for the current iterate, kept in sync with every update.
    let mut outputs = DMatrix::<T>::zeros(n, cb.dim());
    let mut fi = vec![T::zero(); cb.dim()];
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = sc_max_violation(&alpha, &outputs, labels, cb, c0) <= tol;

    while !converged && sweeps < max_sweeps {
        for (i, &yi) in labels.iter().enumerate() {
            let kii = k[(i, i)];
            for y in (0..classes).filter(|&y| y != yi) {
                for (d, v) in fi.iter_mut().enumerate() {
                    *v = outputs[(i, d)];
                }
                let cy = cb.code(y);
                let grad = margin + dot(cy, &fi);
                let old = alpha[(i, y)];
                let new = coordinate_step(old, grad, kii, c0);
                let delta = new - old;
                if delta == T::zero() {
                    continue;
                }
                alpha[(i, y)] = new;
                // a_i moves by -delta c_y, so f(x_j) moves by -delta K_ji c_y.
                for j in 0..n {
                    let s = delta * k[(j, i)];
                    if s != T::zero() {
                        for (d, &c) in cy.iter().enumerate() {
                            outputs[(j, d)] -= s * c;
                        }
                    }
                }
            }
        }
        sweeps += 1;
        trace.push(sc_objective(&alpha, &outputs, cb));
        converged = sc_max_violation(&alpha, &outputs, labels, cb, c0) <= tol;
    }
    // Recompute from scratch so the reported objective carries no drift.
    let outputs = sc_outputs(k, &alpha, cb);
    let objective = sc_objective(&alpha, &outputs, cb);
    if !objective.is_finite_val() {
        return Err(Error::Numerical("SC-SVM dual objective is not finite".into()));
    }
    Ok(ScSvmDual {
        alpha,
        c0,
        objective,
        converged,
        sweeps,
        trace,
    })
}

// -- SH-SVM ----------------------------------------------------------------

fn sh_gradients<T: Scalar>(k: &DMatrix<T>, alpha: &DVector<T>, labels: &[usize], cb: &CodeBook<T>) -> DVector<T> {
    let g = cb.gram();
    let n = labels.len();
    DVector::from_fn(n, |i, _| {
        let mut s = T::zero();
        for j in 0..n {
            if alpha[j] != T::zero() {
                s += k[(i, j)] * g[(labels[i], labels[j])] * alpha[j];
            }
        }
        T::one() - s
    })
}

fn sh_objective<T: Scalar>(alpha: &DVector<T>, grads: &DVector<T>) -> T {
    // sum a - 1/2 a^T Q a, with Q a = 1 - grad
    let two = T::lit(2.0);
    alpha
        .iter()
        .zip(grads.iter())
        .fold(T::zero(), |s, (&a, &g)| s + a - a * (T::one() - g) / two)
}

fn sh_max_violation<T: Scalar>(alpha: &DVector<T>, grads: &DVector<T>, c0: T) -> T {
    alpha
        .iter()
        .zip(grads.iter())
        .fold(T::zero(), |w, (&a, &g)| w.max(violation(a, g, c0)))
}

/// Trains the hull-free SH-SVM on the Gram matrix `gram` of the points `train`.
pub fn fit_sh_svm<T: Scalar>(
    gram: &GramMatrix<T>,
    train: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    opts: &QpOptions,
) -> Result<(ShSvmDual<T>, KernelModel<T>)> {
    check_dim(gram.n(), train.nrows(), "fit_sh_svm: gram size vs training points")?;
    let dual = solve_sh_dual(&gram.k, labels, cb, lambda, opts)?;
    let coef = DMatrix::from_fn(labels.len(), cb.dim(), |i, d| dual.alpha[i] * cb.code(labels[i])[d]);
    let model = KernelModel::new(coef, train.clone(), gram.spec, cb.clone(), lambda)?;
    Ok((dual, model))
}

/// Solves the SH-SVM dual on a bare kernel matrix.
pub fn solve_sh_dual<T: Scalar>(
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    opts: &QpOptions,
) -> Result<ShSvmDual<T>> {
    validate(k, labels, cb, lambda, opts)?;
    let n = labels.len();
    let c0 = box_bound(n, lambda);
    let tol = T::lit(opts.tol);
    let g = cb.gram();
    let max_sweeps = opts.max_sweeps.unwrap_or(10 * n * cb.classes());

    let mut alpha = DVector::<T>::zeros(n);
    let mut grads = DVector::<T>::from_element(n, T::one());
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = sh_max_violation(&alpha, &grads, c0) <= tol;

    while !converged && sweeps < max_sweeps {
        for i in 0..n {
            let curv = k[(i, i)] * g[(labels[i], labels[i])];
            let old = alpha[i];
            let new = coordinate_step(old, grads[i], curv, c0);
            let delta = new - old;
            if delta == T::zero() {
                continue;
            }
            alpha[i] = new;
            for j in 0..n {
                grads[j] -= delta * k[(j, i)] * g[(labels[j], labels[i])];
            }
        }
        sweeps += 1;
        trace.push(sh_objective(&alpha, &grads));
        converged = sh_max_violation(&alpha, &grads, c0) <= tol;
    }
    let grads = sh_gradients(k, &alpha, labels, cb);
    let objective = sh_objective(&alpha, &grads);
    if !objective.is_finite_val() {
        return Err(Error::Numerical("SH-SVM dual objective is not finite".into()));
    }
    Ok(ShSvmDual {
        alpha,
        c0,
        objective,
        converged,
        sweeps,
        trace,
    })
}

/// A dual iterate whose KKT conditions can be checked from scratch.
pub trait DualSolution<T: Scalar> {
    /// Largest KKT violation: `|grad|` at free coordinates, `max(grad, 0)` at
    /// the lower bound and `max(-grad, 0)` at the upper bound.
    fn kkt_violation(&self, k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<T>;
    /// Dual objective recomputed from scratch.
    fn dual_objective(&self, k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<T>;
}

impl<T: Scalar> DualSolution<T> for ScSvmDual<T> {
    fn kkt_violation(&self, k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<T> {
        check_dim(k.nrows(), self.alpha.nrows(), "kkt: alpha rows")?;
        check_dim(cb.classes(), self.alpha.ncols(), "kkt: alpha columns")?;
        check_dim(k.nrows(), labels.len(), "kkt: labels")?;
        let outputs = sc_outputs(k, &self.alpha, cb);
        Ok(sc_max_violation(&self.alpha, &outputs, labels, cb, self.c0))
    }

    fn dual_objective(&self, k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<T> {
        check_dim(k.nrows(), self.alpha.nrows(), "objective: alpha rows")?;
        check_dim(k.nrows(), labels.len(), "objective: labels")?;
        Ok(sc_objective(&self.alpha, &sc_outputs(k, &self.alpha, cb), cb))
    }
}

impl<T: Scalar> DualSolution<T> for ShSvmDual<T> {
    fn kkt_violation(&self, k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<T> {
        check_dim(k.nrows(), self.alpha.len(), "kkt: alpha length")?;
        check_dim(k.nrows(), labels.len(), "kkt: labels")?;
        let grads = sh_gradients(k, &self.alpha, labels, cb);
        Ok(sh_max_violation(&self.alpha, &grads, self.c0))
    }

    fn dual_objective(&self, k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<T> {
        check_dim(k.nrows(), self.alpha.len(), "objective: alpha length")?;
        Ok(sh_objective(&self.alpha, &sh_gradients(k, &self.alpha, labels, cb)))
    }
}

/// Maximum KKT violation of `dual` for the problem `(K, labels)`.
pub fn kkt_report<T: Scalar, D: DualSolution<T>>(
    dual: &D,
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
) -> Result<T> {
    dual.kkt_violation(k, labels, cb)
}
