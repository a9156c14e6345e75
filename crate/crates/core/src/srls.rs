//! Simplex regularized least squares.
//!
//! With S-LS loss the Tikhonov minimizer in the kernel form solves
//! `(K + lambda n I) A = Y`, where row `i` of `Y` is the code of `y_i`, and in
//! the linear form `(X^T X + lambda n I) W^T = X^T Y`. Both right-hand sides
//! have `T - 1` columns that share one factorization.
//!
//! Leave-one-out predictions come in closed form from `(K + lambda n I)^-1`:
//! `f_loo = Y - C / diag`, `C = (K + lambda n I)^-1 Y`, each row of `C`
//! divided by the matching diagonal entry of the inverse. [`reg_path`] does this
//! for a whole grid of `lambda` from a single eigendecomposition of `K`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coding::CodeBook;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{cross_gram, GramMatrix, KernelSpec};
use crate::losses::{loss_value_unchecked, LossKind};
use crate::scalar::Scalar;

/// Number of values on a regularization path.
pub const PATH_LEN: usize = 100;
/// Lower end of a path relative to its upper end when `K` is (numerically)
/// rank deficient.
pub const LAMBDA_MIN_RATIO: f64 = 1e-10;

/// Kernel expansion `f(x) = sum_j k(x, x_j) a_j` with `a_j` the rows of `coef`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel<T: Scalar> {
    pub coef: DMatrix<T>,
    pub train: DMatrix<T>,
    pub kernel: KernelSpec<T>,
    pub codebook: CodeBook<T>,
    pub lambda: T,
}

/// Linear model `f(x) = W x`, `W` of shape `(T-1) x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Scalar> {
    pub weights: DMatrix<T>,
    pub codebook: CodeBook<T>,
    pub lambda: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<T: Scalar> {
    Kernel(KernelModel<T>),
    Linear(LinearModel<T>),
}

impl<T: Scalar> KernelModel<T> {
    pub fn new(
        coef: DMatrix<T>,
        train: DMatrix<T>,
        kernel: KernelSpec<T>,
        codebook: CodeBook<T>,
        lambda: T,
    ) -> Result<Self> {
        check_dim(train.nrows(), coef.nrows(), "kernel model: one coefficient row per training point")?;
        check_dim(codebook.dim(), coef.ncols(), "kernel model: coefficient width must be T-1")?;
        check_lambda(lambda)?;
        Ok(Self {
            coef,
            train,
            kernel,
            codebook,
            lambda,
        })
    }

    pub fn predict(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        check_dim(self.train.ncols(), x.ncols(), "predict: feature dimension")?;
        Ok(cross_gram(&self.kernel, &self.train, x)? * &self.coef)
    }

    /// Predictions from a precomputed `m x n` cross-kernel matrix.
    pub fn predict_from_kernel(&self, cross: &DMatrix<T>) -> Result<DMatrix<T>> {
        check_dim(self.coef.nrows(), cross.ncols(), "predict: cross kernel columns")?;
        Ok(cross * &self.coef)
    }

    pub fn classify(&self, x: &DMatrix<T>) -> Result<Vec<usize>> {
        self.codebook.decode_batch(&self.predict(x)?)
    }

    /// `lambda * trace(A^T K A)`, the squared RKHS norm scaled by `lambda`.
    pub fn penalty(&self, k: &DMatrix<T>) -> T {
        let ka = k * &self.coef;
        self.lambda * self.coef.dot(&ka)
    }

    /// The equivalent `W = A^T X` for a linear kernel; `None` otherwise.
    pub fn to_linear(&self) -> Option<LinearModel<T>> {
        match self.kernel {
            KernelSpec::Linear => Some(LinearModel {
                weights: self.coef.tr_mul(&self.train),
                codebook: self.codebook.clone(),
                lambda: self.lambda,
            }),
            KernelSpec::Rbf { .. } => None,
        }
    }
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(weights: DMatrix<T>, codebook: CodeBook<T>, lambda: T) -> Result<Self> {
        check_dim(codebook.dim(), weights.nrows(), "linear model: W must have T-1 rows")?;
        check_lambda(lambda)?;
        Ok(Self {
            weights,
            codebook,
            lambda,
        })
    }

    pub fn features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        check_dim(self.weights.ncols(), x.ncols(), "predict: feature dimension")?;
        Ok(x * self.weights.transpose())
    }

    pub fn classify(&self, x: &DMatrix<T>) -> Result<Vec<usize>> {
        self.codebook.decode_batch(&self.predict(x)?)
    }

    pub fn penalty(&self) -> T {
        self.lambda * self.weights.norm_squared()
    }
}

impl<T: Scalar> Model<T> {
    pub fn codebook(&self) -> &CodeBook<T> {
        match self {
            Model::Kernel(m) => &m.codebook,
            Model::Linear(m) => &m.codebook,
        }
    }

    pub fn lambda(&self) -> T {
        match self {
            Model::Kernel(m) => m.lambda,
            Model::Linear(m) => m.lambda,
        }
    }

    pub fn features(&self) -> usize {
        match self {
            Model::Kernel(m) => m.train.ncols(),
            Model::Linear(m) => m.features(),
        }
    }

    pub fn predict(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        match self {
            Model::Kernel(m) => m.predict(x),
            Model::Linear(m) => m.predict(x),
        }
    }

    pub fn classify(&self, x: &DMatrix<T>) -> Result<Vec<usize>> {
        self.codebook().decode_batch(&self.predict(x)?)
    }
}

impl<T: Scalar> From<KernelModel<T>> for Model<T> {
    fn from(m: KernelModel<T>) -> Self {
        Model::Kernel(m)
    }
}

impl<T: Scalar> From<LinearModel<T>> for Model<T> {
    fn from(m: LinearModel<T>) -> Self {
        Model::Linear(m)
    }
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if lambda > T::zero() && lambda.is_finite_val() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda must be positive and finite, got {lambda}"
        )))
    }
}

fn check_square<T: Scalar>(k: &DMatrix<T>, labels: &[usize]) -> Result<()> {
    check_dim(k.nrows(), k.ncols(), "kernel matrix must be square")?;
    check_dim(k.nrows(), labels.len(), "one label per kernel row")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    Ok(())
}

/// `M + shift * I`
fn shifted<T: Scalar>(m: &DMatrix<T>, shift: T) -> DMatrix<T> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += shift;
    }
    out
}

fn cholesky<T: Scalar>(m: DMatrix<T>, what: &str) -> Result<nalgebra::Cholesky<T, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite_val()) {
        return Err(Error::Numerical(format!("{what}: non-finite entries")));
    }
    m.cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what}: matrix is not positive definite")))
}

/// Solves `(K + lambda n I) A = Y` for the coefficient matrix `A`.
pub fn kernel_coefficients<T: Scalar>(
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
) -> Result<DMatrix<T>> {
    check_square(k, labels)?;
    check_lambda(lambda)?;
    let y = cb.label_matrix(labels)?;
    let n = T::count(labels.len());
    let chol = cholesky(shifted(k, lambda * n), "S-RLS kernel system")?;
    let a = chol.solve(&y);
    if a.iter().any(|v| !v.is_finite_val()) {
        return Err(Error::Numerical("S-RLS kernel solve produced non-finite values".into()));
    }
    Ok(a)
}

/// Kernel S-RLS on the points `train` whose Gram matrix is `gram`.
pub fn fit_kernel<T: Scalar>(
    gram: &GramMatrix<T>,
    train: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
) -> Result<KernelModel<T>> {
    check_dim(gram.n(), train.nrows(), "fit_kernel: gram size vs training points")?;
    let coef = kernel_coefficients(&gram.k, labels, cb, lambda)?;
    KernelModel::new(coef, train.clone(), gram.spec, cb.clone(), lambda)
}

/// Linear S-RLS: `(X^T X + lambda n I) W^T = X^T Y`.
pub fn fit_linear<T: Scalar>(
    x: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
) -> Result<LinearModel<T>> {
    check_dim(x.nrows(), labels.len(), "fit_linear: one label per row")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    check_lambda(lambda)?;
    let y = cb.label_matrix(labels)?;
    let n = T::count(labels.len());
    let xt = x.transpose();
    let chol = cholesky(shifted(&(&xt * x), lambda * n), "S-RLS linear system")?;
    let wt = chol.solve(&(xt * y));
    if wt.iter().any(|v| !v.is_finite_val()) {
        return Err(Error::Numerical("S-RLS linear solve produced non-finite values".into()));
    }
    LinearModel::new(wt.transpose(), cb.clone(), lambda)
}

/// Regularized empirical risk `(1/n) sum V(y_i, f(x_i)) + lambda |f|^2` of a
/// kernel model evaluated on its own training Gram matrix.
pub fn kernel_objective<T: Scalar>(
    model: &KernelModel<T>,
    k: &DMatrix<T>,
    labels: &[usize],
    loss: LossKind,
) -> Result<T> {
    check_square(k, labels)?;
    let f = model.predict_from_kernel(k)?;
    Ok(empirical_risk(&f, labels, &model.codebook, loss)? + model.penalty(k))
}

/// Same as [`kernel_objective`] for a linear model, with `|f|^2 = |W|_F^2`.
pub fn linear_objective<T: Scalar>(
    model: &LinearModel<T>,
    x: &DMatrix<T>,
    labels: &[usize],
    loss: LossKind,
) -> Result<T> {
    let f = model.predict(x)?;
    Ok(empirical_risk(&f, labels, &model.codebook, loss)? + model.penalty())
}

/// `(1/n) sum_i V(y_i, f_i)` over the rows of `f`.
pub fn empirical_risk<T: Scalar>(
    f: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    loss: LossKind,
) -> Result<T> {
    check_dim(f.nrows(), labels.len(), "empirical risk: one label per prediction")?;
    check_dim(cb.dim(), f.ncols(), "empirical risk: prediction width")?;
    cb.check_labels(labels)?;
    if labels.is_empty() {
        return Ok(T::zero());
    }
    let mut row = vec![T::zero(); cb.dim()];
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        for (k, r) in row.iter_mut().enumerate() {
            *r = f[(i, k)];
        }
        total += loss_value_unchecked(loss, cb, y, &row);
    }
    Ok(total / T::count(labels.len()))
}

/// Fraction of positions where `predicted` and `truth` disagree.
pub fn error_rate(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    wrong as f64 / truth.len() as f64
}

/// Leave-one-out predictions and misclassification rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LooResult<T: Scalar> {
    /// Row `i` is the prediction at `x_i` of the model trained without it.
    pub predictions: DMatrix<T>,
    pub labels: Vec<usize>,
    pub rate: f64,
}

fn loo_from_parts<T: Scalar>(
    y: &DMatrix<T>,
    c: &DMatrix<T>,
    diag: &DVector<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
) -> Result<LooResult<T>> {
    if let Some(i) = diag.iter().position(|d| *d == T::zero() || !d.is_finite_val()) {
        return Err(Error::Degenerate(format!(
            "diagonal entry {i} of (K + lambda n I)^-1 is {}",
            diag[i]
        )));
    }
    let predictions = DMatrix::from_fn(y.nrows(), y.ncols(), |i, k| y[(i, k)] - c[(i, k)] / diag[i]);
    let decoded = cb.decode_batch(&predictions)?;
    let rate = error_rate(&decoded, labels);
    Ok(LooResult {
        predictions,
        labels: decoded,
        rate,
    })
}

/// Closed-form leave-one-out for kernel S-RLS at a single `lambda`.
pub fn loo_errors<T: Scalar>(
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
) -> Result<LooResult<T>> {
    check_square(k, labels)?;
    check_lambda(lambda)?;
    let y = cb.label_matrix(labels)?;
    let n = T::count(labels.len());
    let inv = cholesky(shifted(k, lambda * n), "S-RLS leave-one-out")?.inverse();
    let c = &inv * &y;
    loo_from_parts(&y, &c, &inv.diagonal(), labels, cb)
}

/// `PATH_LEN` log-spaced values from the largest to the smallest eigenvalue,
/// descending. The lower end is clamped to `LAMBDA_MIN_RATIO * max`.
pub fn lambda_grid<T: Scalar>(eigenvalues: &[T]) -> Result<Vec<T>> {
    let max = eigenvalues
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), |a, b| a.max(b));
    if !(max > T::zero()) || !max.is_finite_val() {
        return Err(Error::Degenerate(format!(
            "largest eigenvalue of the kernel matrix is {max}, cannot build a lambda grid"
        )));
    }
    let min = eigenvalues
        .iter()
        .copied()
        .fold(T::lit(f64::INFINITY), |a, b| a.min(b))
        .max(max * T::lit(LAMBDA_MIN_RATIO));
    let (hi, lo) = (max.ln(), min.ln());
    let last = T::count(PATH_LEN - 1);
    let mut grid: Vec<T> = (0..PATH_LEN)
        .map(|i| (hi + (lo - hi) * T::count(i) / last).exp())
        .collect();
    grid[0] = max;
    grid[PATH_LEN - 1] = min;
    Ok(grid)
}

/// Index of the smallest rate, ties broken towards the larger `lambda`.
pub fn select_min_rate<T: Scalar>(lambdas: &[T], rates: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&l, &r)) in lambdas.iter().zip(rates).enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if r < rates[b] || (r == rates[b] && l > lambdas[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

/// A regularization path computed from one eigendecomposition `K = Q L Q^T`.
///
/// `Q` may be thin (`n x r`, `r < n`); the orthogonal complement of its
/// columns then carries eigenvalue zero.
#[derive(Debug, Clone)]
pub struct RegPath<T: Scalar> {
    pub lambdas: Vec<T>,
    pub loo_rates: Vec<f64>,
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
    squared_eigenvectors: DMatrix<T>,
    // Q^T Y
    projected: DMatrix<T>,
    y: DMatrix<T>,
    labels: Vec<usize>,
    codebook: CodeBook<T>,
    thin: bool,
}

/// Eigendecomposes `K` once, builds the default grid and evaluates the
/// leave-one-out rate at every `lambda`.
pub fn reg_path<T: Scalar>(k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<RegPath<T>> {
    let mut path = RegPath::decompose(k, labels, cb)?;
    let grid = lambda_grid(path.eigenvalues.as_slice())?;
    path.evaluate(grid)?;
    Ok(path)
}

/// Regularization path for the linear kernel `K = X X^T` from a thin SVD of
/// `X`, in `O(n p^2)` instead of `O(n^3)`.
pub fn reg_path_linear<T: Scalar>(x: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<RegPath<T>> {
    check_dim(x.nrows(), labels.len(), "linear path: one label per row")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if x.iter().any(|v| !v.is_finite_val()) {
        return Err(Error::Numerical("feature matrix has non-finite entries".into()));
    }
    let svd = x.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return left singular vectors".into()))?;
    let smax = svd.singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    // Directions with negligible singular value belong to the null space.
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > smax * T::lit(1e-10))
        .collect();
    let q = u.select_columns(&keep);
    let eigenvalues = DVector::from_iterator(keep.len(), keep.iter().map(|&k| svd.singular_values[k].powi(2)));
    let mut path = RegPath::from_parts(q, eigenvalues, labels, cb)?;
    let mut spectrum: Vec<T> = path.eigenvalues.iter().copied().collect();
    if path.thin {
        spectrum.push(T::zero());
    }
    path.evaluate(lambda_grid(&spectrum)?)?;
    Ok(path)
}

/// [`reg_path`] on a caller-supplied grid.
pub fn reg_path_with_grid<T: Scalar>(
    k: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambdas: Vec<T>,
) -> Result<RegPath<T>> {
    let mut path = RegPath::decompose(k, labels, cb)?;
    path.evaluate(lambdas)?;
    Ok(path)
}

impl<T: Scalar> RegPath<T> {
    fn decompose(k: &DMatrix<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<Self> {
        check_square(k, labels)?;
        if k.iter().any(|v| !v.is_finite_val()) {
            return Err(Error::Numerical("kernel matrix has non-finite entries".into()));
        }
        let (eigenvalues, eigenvectors) = T::symmetric_eigen(k)
            .filter(|(l, _)| l.iter().all(|v| v.is_finite_val()))
            .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
        Self::from_parts(eigenvectors, eigenvalues, labels, cb)
    }

    fn from_parts(q: DMatrix<T>, eigenvalues: DVector<T>, labels: &[usize], cb: &CodeBook<T>) -> Result<Self> {
        let y = cb.label_matrix(labels)?;
        let projected = q.tr_mul(&y);
        let squared_eigenvectors = q.map(|v| v * v);
        Ok(Self {
            lambdas: Vec::new(),
            loo_rates: Vec::new(),
            thin: q.ncols() < q.nrows(),
            eigenvalues,
            eigenvectors: q,
            squared_eigenvectors,
            projected,
            y,
            labels: labels.to_vec(),
            codebook: cb.clone(),
        })
    }

    fn evaluate(&mut self, lambdas: Vec<T>) -> Result<()> {
        lambdas.iter().try_for_each(|&l| check_lambda(l))?;
        let rates = lambdas
            .par_iter()
            .map(|&l| self.loo_at(l).map(|r| r.rate))
            .collect::<Result<Vec<_>>>()?;
        self.lambdas = lambdas;
        self.loo_rates = rates;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Eigenvalues matching the columns of `Q`; with a thin `Q` the
    /// remaining `n - r` eigenvalues are zero.
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// `1 / (n lambda)`, the weight of the null space of a thin `Q`.
    fn null_weight(&self, lambda: T) -> T {
        T::one() / (lambda * T::count(self.n()))
    }

    /// `1 / (l_k + n lambda)` per eigenvalue.
    fn spectral_weights(&self, lambda: T) -> Result<DVector<T>> {
        let shift = lambda * T::count(self.n());
        let w = self.eigenvalues.map(|l| T::one() / (l + shift));
        if w.iter().any(|v| !v.is_finite_val() || *v <= T::zero()) {
            return Err(Error::Numerical(format!(
                "K + lambda n I is singular or indefinite at lambda = {lambda}"
            )));
        }
        Ok(w)
    }

    fn coefficients_with(&self, weights: &DVector<T>, lambda: T) -> DMatrix<T> {
        let mut scaled = self.projected.clone();
        if self.thin {
            // Q (W - w0) Q^T Y + w0 Y
            let w0 = self.null_weight(lambda);
            for (mut row, &w) in scaled.row_iter_mut().zip(weights.iter()) {
                row *= w - w0;
            }
            &self.eigenvectors * scaled + &self.y * w0
        } else {
            for (mut row, &w) in scaled.row_iter_mut().zip(weights.iter()) {
                row *= w;
            }
            &self.eigenvectors * scaled
        }
    }

    /// `A(lambda) = Q (L + n lambda I)^-1 Q^T Y` for any positive `lambda`.
    pub fn coefficients_at(&self, lambda: T) -> Result<DMatrix<T>> {
        check_lambda(lambda)?;
        Ok(self.coefficients_with(&self.spectral_weights(lambda)?, lambda))
    }

    /// Leave-one-out predictions at any positive `lambda`, reusing `Q` and `L`.
    pub fn loo_at(&self, lambda: T) -> Result<LooResult<T>> {
        check_lambda(lambda)?;
        let w = self.spectral_weights(lambda)?;
        let mut diag = &self.squared_eigenvectors * &w;
        if self.thin {
            let w0 = self.null_weight(lambda);
            for (d, row) in diag.iter_mut().zip(self.squared_eigenvectors.row_iter()) {
                let leverage = row.sum().min(T::one());
                *d += (T::one() - leverage) * w0;
            }
        }
        let c = self.coefficients_with(&w, lambda);
        loo_from_parts(&self.y, &c, &diag, &self.labels, &self.codebook)
    }

    /// Error rate on held-out points for every `lambda` on the path, given
    /// the `m x n` kernel between held-out and training points.
    pub fn holdout_rates(&self, cross: &DMatrix<T>, truth: &[usize]) -> Result<Vec<f64>> {
        check_dim(self.n(), cross.ncols(), "holdout: cross kernel columns")?;
        check_dim(cross.nrows(), truth.len(), "holdout: one label per held-out row")?;
        self.lambdas
            .par_iter()
            .map(|&l| {
                let pred = cross * self.coefficients_at(l)?;
                Ok(error_rate(&self.codebook.decode_batch(&pred)?, truth))
            })
            .collect()
    }

    /// Builds the kernel model at `lambda` for the training points `train`.
    pub fn model_at(&self, lambda: T, train: &DMatrix<T>, kernel: KernelSpec<T>) -> Result<KernelModel<T>> {
        check_dim(self.n(), train.nrows(), "path model: training points")?;
        KernelModel::new(self.coefficients_at(lambda)?, train.clone(), kernel, self.codebook.clone(), lambda)
    }
}

/// The `lambda` with the smallest leave-one-out rate on the path (ties to the
/// larger `lambda`) and that rate.
pub fn select_lambda_loo<T: Scalar>(path: &RegPath<T>) -> Option<(T, f64)> {
    select_min_rate(&path.lambdas, &path.loo_rates).map(|i| (path.lambdas[i], path.loo_rates[i]))
}
