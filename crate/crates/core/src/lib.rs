//! Multiclass classification with simplex coding.
//!
//! Labels `0..T` are coded as the vertices of a regular simplex in
//! `R^(T-1)` and predictions are decoded by the largest inner product with a
//! code vector. On top of the coding this crate provides
//!
//! - [`srls`]: simplex regularized least squares with closed-form
//!   leave-one-out and an eigendecomposition-based regularization path,
//! - [`svm_qp`]: dual coordinate ascent for the simplex cone and simplex
//!   half-space SVMs,
//! - [`online`]: projected stochastic subgradient training of linear models,
//! - [`oracle`]: exact risks on finite distributions, used to check Fisher
//!   consistency and the comparison inequalities numerically,
//! - [`data`]: CSV and sparse `label idx:val` loaders, splits and scaling.
//!
//! The numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod coding;
pub mod data;
pub mod error;
pub mod kernels;
pub mod losses;
pub mod srls;
pub mod online;
pub mod oracle;
pub mod svm_qp;
mod scalar;

pub use coding::CodeBook;
pub use data::{Dataset, LabelColumn, SplitSpec};
pub use error::{Error, Result};
pub use kernels::{cross_gram, gram, rbf_sigma_heuristic, GramMatrix, KernelSpec};
pub use losses::{loss_value, subgradient_linear, LossKind};
pub use online::{LearningRate, OnlineOptions, OnlineState};
pub use oracle::FiniteDistribution;
pub use scalar::Scalar;
pub use srls::{KernelModel, LinearModel, Model};
pub use svm_qp::{QpOptions, ScSvmDual, ShSvmDual};

pub type CodeBook64 = CodeBook<f64>;
pub type CodeBook32 = CodeBook<f32>;
pub type GramMatrix64 = GramMatrix<f64>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type Dataset64 = Dataset<f64>;
pub type KernelModel64 = KernelModel<f64>;
pub type LinearModel64 = LinearModel<f64>;
pub type Model64 = Model<f64>;
pub type OnlineState64 = OnlineState<f64>;
pub type FiniteDistribution64 = FiniteDistribution<f64>;
