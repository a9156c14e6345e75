//! The simplex surrogate losses and their pointwise subgradients.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::coding::{dot, CodeBook};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Simplex least squares, `|c_y - v|^2`.
    SLs,
    /// Simplex cone SVM, `sum_{y' != y} max(1/(T-1) + <c_y', v>, 0)`.
    ScSvm,
    /// Simplex half-space SVM, `max(1 - <c_y, v>, 0)`.
    ShSvm,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::SLs, LossKind::ScSvm, LossKind::ShSvm];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SLs => "s-ls",
            LossKind::ScSvm => "sc-svm",
            LossKind::ShSvm => "sh-svm",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s-ls" | "sls" => Ok(LossKind::SLs),
            "sc-svm" | "scsvm" => Ok(LossKind::ScSvm),
            "sh-svm" | "shsvm" => Ok(LossKind::ShSvm),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

/// `V(y, v)` for a prediction `v` in `R^(T-1)`.
pub fn loss_value<T: Scalar>(kind: LossKind, cb: &CodeBook<T>, y: usize, v: &[T]) -> Result<T> {
    check_dim(cb.dim(), v.len(), "loss_value: prediction length must be T-1")?;
    cb.check_label(y)?;
    Ok(loss_value_unchecked(kind, cb, y, v))
}

pub(crate) fn loss_value_unchecked<T: Scalar>(
    kind: LossKind,
    cb: &CodeBook<T>,
    y: usize,
    v: &[T],
) -> T {
    match kind {
        LossKind::SLs => cb.code(y).iter().zip(v).fold(T::zero(), |s, (&c, &x)| {
            let d = c - x;
            s + d * d
        }),
        LossKind::ScSvm => {
            let margin = margin_constant(cb);
            (0..cb.classes())
                .filter(|&k| k != y)
                .map(|k| (margin + cb.score(v, k)).max(T::zero()))
                .fold(T::zero(), |s, h| s + h)
        }
        LossKind::ShSvm => (T::one() - cb.score(v, y)).max(T::zero()),
    }
}

/// `1 / (T - 1)`
pub(crate) fn margin_constant<T: Scalar>(cb: &CodeBook<T>) -> T {
    T::one() / T::count(cb.dim())
}

/// A subgradient of `v -> V(y, v)`.
///
/// Hinges are active only strictly past their kink: `<c_y', v> > -1/(T-1)`
/// for SC-SVM and `<c_y, v> < 1` for SH-SVM.
pub fn output_subgradient<T: Scalar>(
    kind: LossKind,
    cb: &CodeBook<T>,
    y: usize,
    v: &[T],
) -> Result<Vec<T>> {
    check_dim(cb.dim(), v.len(), "output_subgradient: prediction length must be T-1")?;
    cb.check_label(y)?;
    Ok(output_subgradient_unchecked(kind, cb, y, v))
}

pub(crate) fn output_subgradient_unchecked<T: Scalar>(
    kind: LossKind,
    cb: &CodeBook<T>,
    y: usize,
    v: &[T],
) -> Vec<T> {
    let cy = cb.code(y);
    match kind {
        LossKind::SLs => cy
            .iter()
            .zip(v)
            .map(|(&c, &x)| -(T::lit(2.0)) * (c - x))
            .collect(),
        LossKind::ScSvm => {
            let threshold = -margin_constant(cb);
            let mut g = vec![T::zero(); cb.dim()];
            for k in (0..cb.classes()).filter(|&k| k != y) {
                if cb.score(v, k) > threshold {
                    for (gi, &c) in g.iter_mut().zip(cb.code(k)) {
                        *gi += c;
                    }
                }
            }
            g
        }
        LossKind::ShSvm => {
            if dot(cy, v) < T::one() {
                cy.iter().map(|&c| -c).collect()
            } else {
                vec![T::zero(); cb.dim()]
            }
        }
    }
}

/// Subgradient of `W -> V(y, W x)` for a linear model `W` of shape
/// `(T-1) x p`; always the outer product `g x^T` of the output subgradient.
///
/// For S-LS this is the true gradient `-2 (c_y - W x) x^T`, so an optimizer
/// subtracts it.
pub fn subgradient_linear<T: Scalar>(
    kind: LossKind,
    cb: &CodeBook<T>,
    y: usize,
    w: &DMatrix<T>,
    x: &[T],
) -> Result<DMatrix<T>> {
    check_dim(cb.dim(), w.nrows(), "subgradient_linear: W must have T-1 rows")?;
    check_dim(w.ncols(), x.len(), "subgradient_linear: feature length")?;
    cb.check_label(y)?;
    let v = apply_linear(w, x);
    let g = output_subgradient_unchecked(kind, cb, y, &v);
    Ok(DMatrix::from_fn(w.nrows(), w.ncols(), |r, c| g[r] * x[c]))
}

/// `W x` as a plain vector.
pub(crate) fn apply_linear<T: Scalar>(w: &DMatrix<T>, x: &[T]) -> Vec<T> {
    (0..w.nrows())
        .map(|r| (0..w.ncols()).fold(T::zero(), |s, c| s + w[(r, c)] * x[c]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cb(t: usize) -> CodeBook<f64> {
        CodeBook::new(t).unwrap()
    }

    #[test]
    fn loss_vanishes_at_own_code_and_is_one_at_zero() {
        for t in 2..=8 {
            let cb = cb(t);
            let zero = vec![0.0; t - 1];
            for kind in LossKind::ALL {
                for y in 0..t {
                    assert!(loss_value(kind, &cb, y, cb.code(y)).unwrap().abs() < 1e-12);
                    assert!((loss_value(kind, &cb, y, &zero).unwrap() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn loss_at_wrong_code_upper_bounds_misclassification() {
        for t in 2..=8usize {
            let cb = cb(t);
            let tf = t as f64;
            for y in 0..t {
                for z in (0..t).filter(|&z| z != y) {
                    let sls = loss_value(LossKind::SLs, &cb, y, cb.code(z)).unwrap();
                    assert!((sls - 2.0 * tf / (tf - 1.0)).abs() < 1e-12);
                    for kind in [LossKind::ScSvm, LossKind::ShSvm] {
                        let v = loss_value(kind, &cb, y, cb.code(z)).unwrap();
                        assert!((v - tf / (tf - 1.0)).abs() < 1e-12, "{kind} T={t}");
                        assert!(v >= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn binary_losses_reduce_to_scalar_margin_losses() {
        let cb = cb(2);
        for i in -40..=40 {
            let f = i as f64 * 0.1;
            for (y, sign) in [(0usize, 1.0), (1, -1.0)] {
                let hinge = (1.0 - sign * f).max(0.0);
                let sq = (1.0 - sign * f).powi(2);
                assert!((loss_value(LossKind::ScSvm, &cb, y, &[f]).unwrap() - hinge).abs() < 1e-12);
                assert!((loss_value(LossKind::ShSvm, &cb, y, &[f]).unwrap() - hinge).abs() < 1e-12);
                assert!((loss_value(LossKind::SLs, &cb, y, &[f]).unwrap() - sq).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors_on_bad_dimension_or_label() {
        let cb = cb(4);
        assert!(matches!(
            loss_value(LossKind::SLs, &cb, 0, &[0.0; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            loss_value(LossKind::SLs, &cb, 4, &[0.0; 3]),
            Err(Error::InvalidArgument(_))
        ));
        let w = DMatrix::<f64>::zeros(3, 2);
        assert!(subgradient_linear(LossKind::ShSvm, &cb, 0, &w, &[1.0; 3]).is_err());
        assert!(subgradient_linear(LossKind::ShSvm, &cb, 0, &DMatrix::zeros(2, 2), &[1.0; 2]).is_err());
    }

    /// `W` with `W x = target`, built as `target x^T / |x|^2`.
    fn w_hitting(target: &[f64], x: &[f64]) -> DMatrix<f64> {
        let nx: f64 = x.iter().map(|v| v * v).sum();
        DMatrix::from_fn(target.len(), x.len(), |r, c| target[r] * x[c] / nx)
    }

    #[test]
    fn sls_subgradient_vanishes_at_the_code() {
        let cb = cb(4);
        let x = [0.5, -1.0, 2.0];
        let w = w_hitting(cb.code(2), &x);
        let g = subgradient_linear(LossKind::SLs, &cb, 2, &w, &x).unwrap();
        assert!(g.abs().max() < 1e-14);
    }

    #[test]
    fn sh_subgradient_vanishes_when_margin_is_met() {
        let cb = cb(5);
        let x = [1.0, 2.0];
        let target: Vec<f64> = cb.code(3).iter().map(|c| 2.0 * c).collect();
        let w = w_hitting(&target, &x);
        let g = subgradient_linear(LossKind::ShSvm, &cb, 3, &w, &x).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sc_subgradient_at_zero_activates_every_other_class() {
        for t in 2..=7 {
            let cb = cb(t);
            let x = [1.5, -0.5];
            let w = DMatrix::<f64>::zeros(t - 1, 2);
            for y in 0..t {
                let g = subgradient_linear(LossKind::ScSvm, &cb, y, &w, &x).unwrap();
                // sum over y' != y of c_y' = -c_y
                let want = DMatrix::from_fn(t - 1, 2, |r, c| -cb.code(y)[r] * x[c]);
                assert!((g - want).abs().max() < 1e-12);
            }
        }
    }

    fn hinge_distance(kind: LossKind, cb: &CodeBook<f64>, y: usize, v: &[f64]) -> f64 {
        match kind {
            LossKind::SLs => f64::INFINITY,
            LossKind::ShSvm => (1.0 - cb.score(v, y)).abs(),
            LossKind::ScSvm => (0..cb.classes())
                .filter(|&k| k != y)
                .map(|k| (cb.score(v, k) + 1.0 / cb.dim() as f64).abs())
                .fold(f64::INFINITY, f64::min),
        }
    }

    #[test]
    fn subgradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-6;
        for kind in LossKind::ALL {
            let mut checked = 0;
            while checked < 100 {
                let t = rng.random_range(2..=6);
                let p = rng.random_range(1..=5);
                let cb = cb(t);
                let y = rng.random_range(0..t);
                let w = DMatrix::from_fn(t - 1, p, |_, _| rng.random_range(-1.0..1.0));
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let v = apply_linear(&w, &x);
                if hinge_distance(kind, &cb, y, &v) < 1e-4 {
                    continue;
                }
                let g = subgradient_linear(kind, &cb, y, &w, &x).unwrap();
                let fd = DMatrix::from_fn(t - 1, p, |r, c| {
                    let mut wp = w.clone();
                    wp[(r, c)] += h;
                    let mut wm = w.clone();
                    wm[(r, c)] -= h;
                    let lp = loss_value(kind, &cb, y, &apply_linear(&wp, &x)).unwrap();
                    let lm = loss_value(kind, &cb, y, &apply_linear(&wm, &x)).unwrap();
                    (lp - lm) / (2.0 * h)
                });
                let err = (&fd - &g).norm();
                assert!(err <= 1e-5 * g.norm().max(1.0), "{kind}: err {err}");
                checked += 1;
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert!("hinge".parse::<LossKind>().is_err());
    }

    proptest! {
        #[test]
        fn losses_are_convex_along_segments(
            t in 2usize..7,
            a in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
            s in 0.0f64..1.0,
            y in 0usize..7,
        ) {
            let cb = cb(t);
            let y = y % t;
            let (a, b) = (&a[..t - 1], &b[..t - 1]);
            let mid: Vec<f64> = a.iter().zip(b).map(|(x, z)| s * x + (1.0 - s) * z).collect();
            for kind in LossKind::ALL {
                let lhs = loss_value(kind, &cb, y, &mid).unwrap();
                let rhs = s * loss_value(kind, &cb, y, a).unwrap()
                    + (1.0 - s) * loss_value(kind, &cb, y, b).unwrap();
                prop_assert!(lhs <= rhs + 1e-12);
            }
        }
    }
}
