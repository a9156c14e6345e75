use nalgebra::{DMatrix, DVector, RealField};
use num_traits::ToPrimitive;

/// Floating point type the numerical routines are written against.
///
/// Only `f32` and `f64` implement it. Most tolerances in the test suite are
/// stated for `f64`.
pub trait Scalar: RealField + Copy + ToPrimitive {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }

    /// Eigenvalues and eigenvectors (as columns) of a symmetric matrix,
    /// reading its lower triangle. `None` if the solver fails.
    #[doc(hidden)]
    fn symmetric_eigen(m: &DMatrix<Self>) -> Option<(DVector<Self>, DMatrix<Self>)>;

    /// Eigenvalues of a symmetric matrix.
    #[doc(hidden)]
    fn symmetric_eigenvalues(m: &DMatrix<Self>) -> Option<DVector<Self>>;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            fn symmetric_eigen(m: &DMatrix<Self>) -> Option<(DVector<Self>, DMatrix<Self>)> {
                let n = m.nrows();
                let a = faer::MatRef::from_column_major_slice(m.as_slice(), n, m.ncols());
                let eig = a.self_adjoint_eigen(faer::Side::Lower).ok()?;
                let s = eig.S().column_vector();
                let u = eig.U();
                Some((
                    DVector::from_fn(n, |i, _| s[i]),
                    DMatrix::from_fn(n, n, |i, j| u[(i, j)]),
                ))
            }

            fn symmetric_eigenvalues(m: &DMatrix<Self>) -> Option<DVector<Self>> {
                let a = faer::MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols());
                a.self_adjoint_eigenvalues(faer::Side::Lower).ok().map(DVector::from_vec)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
