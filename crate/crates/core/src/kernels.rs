//! Kernel evaluation and Gram matrices.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Above this many points the bandwidth heuristic works on a fixed-seed
/// uniform subsample.
pub const SIGMA_HEURISTIC_MAX_POINTS: usize = 5000;
const SIGMA_HEURISTIC_SEED: u64 = 0x5EED_0025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec<T: Scalar> {
    /// `k(x, x') = <x, x'>`
    Linear,
    /// `k(x, x') = exp(-|x - x'|^2 / (2 sigma^2))`
    Rbf { sigma: T },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn rbf(sigma: T) -> Result<Self> {
        if sigma > T::zero() && sigma.is_finite_val() {
            Ok(Self::Rbf { sigma })
        } else {
            Err(Error::InvalidArgument(format!(
                "rbf bandwidth must be positive and finite, got {sigma}"
            )))
        }
    }

    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y),
            KernelSpec::Rbf { sigma } => {
                let d2 = a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| {
                    let d = x - y;
                    s + d * d
                });
                (-d2 / (T::lit(2.0) * sigma * sigma)).exp()
            }
        }
    }
}

/// An evaluated `n x n` kernel matrix together with the kernel that built it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T: Scalar> {
    pub k: DMatrix<T>,
    pub spec: KernelSpec<T>,
}

impl<T: Scalar> GramMatrix<T> {
    /// Wraps a precomputed symmetric matrix, e.g. `K = I` in tests.
    pub fn from_matrix(k: DMatrix<T>, spec: KernelSpec<T>) -> Result<Self> {
        check_dim(k.nrows(), k.ncols(), "gram matrix must be square")?;
        Ok(Self { k, spec })
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }
}

fn check_features<T: Scalar>(x: &DMatrix<T>, what: &str) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "{what} must have at least one row and one column, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite_val()) {
        let (row, col) = (pos % x.nrows(), pos / x.nrows());
        return Err(Error::InvalidData(format!(
            "{what} has a non-finite value at row {row}, column {col}"
        )));
    }
    Ok(())
}

fn rows_of<T: Scalar>(x: &DMatrix<T>) -> Vec<Vec<T>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `K_ij = k(x_i, x_j)` over the rows of `x`.
pub fn gram<T: Scalar>(spec: &KernelSpec<T>, x: &DMatrix<T>) -> Result<GramMatrix<T>> {
    check_features(x, "feature matrix")?;
    let n = x.nrows();
    let rows = rows_of(x);
    // Upper triangle per row, mirrored afterwards so K is exactly symmetric.
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| spec.eval(&rows[i], &rows[j])).collect())
        .collect();
    let mut k = DMatrix::<T>::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            k[(i, i + off)] = v;
            k[(i + off, i)] = v;
        }
    }
    Ok(GramMatrix { k, spec: *spec })
}

/// `m x n` matrix with entries `k(test_i, train_j)`.
pub fn cross_gram<T: Scalar>(
    spec: &KernelSpec<T>,
    train: &DMatrix<T>,
    test: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_dim(train.ncols(), test.ncols(), "cross_gram: feature dimension")?;
    if test.nrows() == 0 {
        return Ok(DMatrix::zeros(0, train.nrows()));
    }
    check_features(train, "training features")?;
    check_features(test, "test features")?;
    let train_rows = rows_of(train);
    let test_rows = rows_of(test);
    let values: Vec<Vec<T>> = test_rows
        .par_iter()
        .map(|a| train_rows.iter().map(|b| spec.eval(a, b)).collect())
        .collect();
    Ok(DMatrix::from_fn(test.nrows(), train.nrows(), |i, j| values[i][j]))
}

/// Lower 25th percentile of the pairwise distances between distinct rows.
///
/// The distances are sorted ascending and the element at 1-based rank
/// `ceil(m / 4)` is returned, `m` being the number of pairs with nonzero
/// distance.
pub fn rbf_sigma_heuristic<T: Scalar>(x: &DMatrix<T>) -> Result<T> {
    check_features(x, "feature matrix")?;
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = if n > SIGMA_HEURISTIC_MAX_POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(SIGMA_HEURISTIC_SEED);
        let mut picked = sample(&mut rng, n, SIGMA_HEURISTIC_MAX_POINTS).into_vec();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|i| x.row(i).iter().map(|v| v.as_f64()).collect())
            .collect()
    } else {
        x.row_iter()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect()
    };
    let mut dists: Vec<f64> = (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            ((i + 1)..rows.len()).filter_map(move |j| {
                let d2: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2 > 0.0).then(|| d2.sqrt())
            })
        })
        .collect();
    if dists.is_empty() {
        return Err(Error::Degenerate(
            "bandwidth heuristic needs at least two distinct points".into(),
        ));
    }
    let rank = dists.len().div_ceil(4) - 1;
    let (_, q, _) = dists.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    Ok(T::lit(*q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(n, p, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        })
    }

    #[test]
    fn linear_gram_of_identity_rows_is_identity() {
        let x = DMatrix::<f64>::identity(4, 4);
        let g = gram(&KernelSpec::Linear, &x).unwrap();
        assert_eq!(g.k, DMatrix::identity(4, 4));
    }

    #[test]
    fn rbf_diagonal_is_exactly_one_and_entries_in_unit_interval() {
        let x = lcg_matrix(20, 3, 1);
        let g = gram(&KernelSpec::rbf(0.7).unwrap(), &x).unwrap();
        for i in 0..20 {
            assert_eq!(g.k[(i, i)], 1.0);
            for j in 0..20 {
                assert!(g.k[(i, j)] > 0.0 && g.k[(i, j)] <= 1.0);
                assert_eq!(g.k[(i, j)], g.k[(j, i)]);
            }
        }
    }

    #[test]
    fn rbf_hand_value() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let g = gram(&KernelSpec::rbf(1.0).unwrap(), &x).unwrap();
        assert!((g.k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.k[(0, 1)] - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn gram_is_psd_up_to_roundoff() {
        for (spec, seed) in [(KernelSpec::Linear, 3), (KernelSpec::rbf(1.3).unwrap(), 4)] {
            let x = lcg_matrix(30, 5, seed);
            let g = gram(&spec, &x).unwrap();
            let eig = g.k.symmetric_eigen();
            let max = eig.eigenvalues.max();
            assert!(eig.eigenvalues.min() >= -1e-8 * max);
        }
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let mut x = DMatrix::<f64>::zeros(3, 2);
        x[(1, 1)] = f64::NAN;
        assert!(matches!(gram(&KernelSpec::Linear, &x), Err(Error::InvalidData(_))));
        x[(1, 1)] = f64::INFINITY;
        assert!(matches!(gram(&KernelSpec::Linear, &x), Err(Error::InvalidData(_))));
    }

    #[test]
    fn empty_inputs_and_bad_sigma_are_rejected() {
        assert!(gram(&KernelSpec::<f64>::Linear, &DMatrix::zeros(0, 3)).is_err());
        assert!(gram(&KernelSpec::<f64>::Linear, &DMatrix::zeros(3, 0)).is_err());
        assert!(KernelSpec::<f64>::rbf(0.0).is_err());
        assert!(KernelSpec::<f64>::rbf(-1.0).is_err());
        assert!(KernelSpec::<f64>::rbf(f64::NAN).is_err());
    }

    #[test]
    fn cross_gram_on_training_points_is_gram() {
        for spec in [KernelSpec::Linear, KernelSpec::rbf(0.9).unwrap()] {
            let x = lcg_matrix(15, 4, 7);
            let g = gram(&spec, &x).unwrap();
            let c = cross_gram(&spec, &x, &x).unwrap();
            assert!((g.k - c).abs().max() < 1e-12);
        }
    }

    #[test]
    fn cross_gram_linear_is_matrix_product() {
        let train = lcg_matrix(9, 3, 11);
        let test = lcg_matrix(5, 3, 12);
        let c = cross_gram(&KernelSpec::Linear, &train, &test).unwrap();
        let oracle = &test * train.transpose();
        assert!((c - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn cross_gram_rbf_hits_one_at_training_point() {
        let train = lcg_matrix(6, 2, 13);
        let test = DMatrix::from_fn(1, 2, |_, j| train[(4, j)]);
        let c = cross_gram(&KernelSpec::rbf(0.5).unwrap(), &train, &test).unwrap();
        assert_eq!(c[(0, 4)], 1.0);
    }

    #[test]
    fn cross_gram_dimension_mismatch() {
        let r = cross_gram(&KernelSpec::<f64>::Linear, &DMatrix::zeros(3, 2), &DMatrix::zeros(3, 4));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sigma_of_two_points_is_their_distance() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        assert_eq!(rbf_sigma_heuristic(&x).unwrap(), 5.0);
    }

    #[test]
    fn sigma_of_collinear_points() {
        // distances {1,1,1,2,2,3}: rank ceil(6/4) = 2 -> 1
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(rbf_sigma_heuristic(&x).unwrap(), 1.0);
    }

    #[test]
    fn sigma_ignores_duplicate_points() {
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend_from_slice(&[1.0, 1.0]);
            data.extend_from_slice(&[1.0, 3.0]);
        }
        let x = DMatrix::from_row_slice(10, 2, &data);
        assert_eq!(rbf_sigma_heuristic(&x).unwrap(), 2.0);
    }

    #[test]
    fn sigma_of_identical_points_is_degenerate() {
        let x = DMatrix::from_element(4, 3, 2.5);
        assert!(matches!(rbf_sigma_heuristic(&x), Err(Error::Degenerate(_))));
        let one = DMatrix::from_element(1, 3, 2.5);
        assert!(rbf_sigma_heuristic(&one).is_err());
    }

    #[test]
    fn sigma_heuristic_subsamples_large_inputs_deterministically() {
        let x = lcg_matrix(SIGMA_HEURISTIC_MAX_POINTS + 50, 2, 21);
        let a = rbf_sigma_heuristic(&x).unwrap();
        let b = rbf_sigma_heuristic(&x).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}
