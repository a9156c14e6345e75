//! Projected stochastic subgradient training of linear models.
//!
//! One step on `(x, y)` with rate `eta`:
//!
//! ```text
//! W_tmp = (1 - eta lambda) W - eta dV(y, W x)
//! W     = min(1, (1 / sqrt(lambda)) / |W_tmp|_F) W_tmp
//! ```
//!
//! The default rate is `eta_i = 1 / (lambda i)` for the `i`-th step, starting
//! from `W = 0`. Each epoch visits every example once in a seeded random order.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coding::CodeBook;
use crate::error::{check_dim, Error, Result};
use crate::losses::{apply_linear, output_subgradient_unchecked, LossKind};
use crate::scalar::Scalar;
use crate::srls::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate<T: Scalar> {
    /// `1 / (lambda i)`
    Pegasos,
    Constant(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState<T: Scalar> {
    /// `(T-1) x p`
    pub weights: DMatrix<T>,
    /// Number of steps taken so far.
    pub step: usize,
    pub lambda: T,
    pub loss: LossKind,
    pub rate: LearningRate<T>,
}

impl<T: Scalar> OnlineState<T> {
    /// Zero weights for `cb.classes()` classes and `features` inputs.
    pub fn new(cb: &CodeBook<T>, features: usize, lambda: T, loss: LossKind, rate: LearningRate<T>) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite_val() {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        if let LearningRate::Constant(eta) = rate {
            if !(eta > T::zero()) || !eta.is_finite_val() {
                return Err(Error::InvalidArgument(format!("learning rate must be positive, got {eta}")));
            }
        }
        Ok(Self {
            weights: DMatrix::zeros(cb.dim(), features),
            step: 0,
            lambda,
            loss,
            rate,
        })
    }

    /// Radius `1 / sqrt(lambda)` of the Frobenius ball.
    pub fn radius(&self) -> T {
        T::one() / self.lambda.sqrt()
    }

    /// Rate used by the next step.
    pub fn next_rate(&self) -> T {
        match self.rate {
            LearningRate::Pegasos => T::one() / (self.lambda * T::count(self.step + 1)),
            LearningRate::Constant(eta) => eta,
        }
    }

    /// One projected subgradient step on `(x, y)`.
    pub fn sgd_step(&mut self, x: &[T], y: usize, cb: &CodeBook<T>) -> Result<()> {
        check_dim(cb.dim(), self.weights.nrows(), "sgd_step: W must have T-1 rows")?;
        check_dim(self.weights.ncols(), x.len(), "sgd_step: feature length")?;
        cb.check_label(y)?;
        if x.iter().any(|v| !v.is_finite_val()) {
            return Err(Error::InvalidData(format!("sgd_step: non-finite features at step {}", self.step + 1)));
        }
        self.step_unchecked(x, y, cb)
    }

    fn step_unchecked(&mut self, x: &[T], y: usize, cb: &CodeBook<T>) -> Result<()> {
        let eta = self.next_rate();
        let v = apply_linear(&self.weights, x);
        let g = output_subgradient_unchecked(self.loss, cb, y, &v);
        let shrink = T::one() - eta * self.lambda;
        let mut norm2 = T::zero();
        for r in 0..self.weights.nrows() {
            let gr = eta * g[r];
            for (c, &xc) in x.iter().enumerate() {
                let w = &mut self.weights[(r, c)];
                *w = shrink * *w - gr * xc;
                norm2 += *w * *w;
            }
        }
        let norm = norm2.sqrt();
        if !norm.is_finite_val() {
            return Err(Error::Numerical(format!(
                "online {} step {} diverged (eta = {eta}, lambda = {})",
                self.loss,
                self.step + 1,
                self.lambda
            )));
        }
        let radius = self.radius();
        if norm > radius {
            self.weights *= radius / norm;
        }
        self.step += 1;
        Ok(())
    }

    pub fn into_model(self, cb: &CodeBook<T>) -> Result<LinearModel<T>> {
        LinearModel::new(self.weights, cb.clone(), self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineOptions<T: Scalar> {
    pub epochs: usize,
    pub seed: u64,
    pub rate: LearningRate<T>,
}

impl<T: Scalar> Default for OnlineOptions<T> {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            rate: LearningRate::Pegasos,
        }
    }
}

/// Trains a linear model on the rows of `x`.
pub fn train_online<T: Scalar>(
    x: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    loss: LossKind,
    opts: &OnlineOptions<T>,
) -> Result<LinearModel<T>> {
    train_online_observed(x, labels, cb, lambda, loss, opts, |_| {})
}

/// [`train_online`] calling `observer` after every step.
pub fn train_online_observed<T: Scalar, F: FnMut(&OnlineState<T>)>(
    x: &DMatrix<T>,
    labels: &[usize],
    cb: &CodeBook<T>,
    lambda: T,
    loss: LossKind,
    opts: &OnlineOptions<T>,
    mut observer: F,
) -> Result<LinearModel<T>> {
    check_dim(x.nrows(), labels.len(), "train_online: one label per row")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("train_online: empty dataset".into()));
    }
    if opts.epochs == 0 {
        return Err(Error::InvalidArgument("train_online: epochs must be at least 1".into()));
    }
    cb.check_labels(labels)?;
    if x.iter().any(|v| !v.is_finite_val()) {
        return Err(Error::InvalidData("train_online: non-finite features".into()));
    }
    let mut state = OnlineState::new(cb, x.ncols(), lambda, loss, opts.rate)?;
    // Row-major copy so each step reads a contiguous feature vector.
    let rows: Vec<Vec<T>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            state.step_unchecked(&rows[i], labels[i], cb)?;
            observer(&state);
        }
    }
    state.into_model(cb)
}
