//! Simplex coding of class labels.
//!
//! Each of `T` classes is mapped to a vertex of the regular simplex centred at
//! the origin of `R^(T-1)`: unit vectors with pairwise inner product
//! `-1/(T-1)` that sum to zero. Decoding a vector returns the class whose code
//! has the largest inner product with it, which is the same as the class with
//! the nearest code vector.
//!
//! Class labels are 0-based indices `0..T` throughout the crate.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// The `T` simplex code vectors and their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook<T: Scalar> {
    classes: usize,
    // (T-1) x T, column y is c_y so that every code is a contiguous slice.
    codes: DMatrix<T>,
    gram: DMatrix<T>,
}

impl<T: Scalar> CodeBook<T> {
    /// Builds the code book for `classes >= 2` classes.
    ///
    /// Coordinates are filled one at a time: at coordinate `k` the `k`-th code
    /// takes the current radius `r` and every later code takes `-r / d` with
    /// `d = T - 1 - k`. The remaining codes then form a smaller simplex of
    /// radius `r * sqrt(1 - 1/d^2)`. Deterministic, `O(T^2)`.
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "simplex coding needs at least 2 classes, got {classes}"
            )));
        }
        let dim = classes - 1;
        let mut codes = DMatrix::<T>::zeros(dim, classes);
        let mut radius = T::one();
        for k in 0..dim {
            let d = T::count(dim - k);
            codes[(k, k)] = radius;
            let tail = -radius / d;
            for y in (k + 1)..classes {
                codes[(k, y)] = tail;
            }
            radius *= (T::one() - T::one() / (d * d)).sqrt();
        }
        let mut gram = DMatrix::<T>::zeros(classes, classes);
        for a in 0..classes {
            for b in 0..classes {
                gram[(a, b)] = dot(column(&codes, a), column(&codes, b));
            }
        }
        Ok(Self {
            classes,
            codes,
            gram,
        })
    }

    /// Number of classes `T`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Code dimension `T - 1`.
    pub fn dim(&self) -> usize {
        self.classes - 1
    }

    /// The code vector `c_y`.
    ///
    /// # Panics
    /// If `y >= T`.
    pub fn code(&self, y: usize) -> &[T] {
        column(&self.codes, y)
    }

    /// Codes as a `(T-1) x T` matrix whose columns are the code vectors.
    pub fn code_matrix(&self) -> &DMatrix<T> {
        &self.codes
    }

    /// `G[y][y'] = <c_y, c_y'>`.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    /// `<v, c_y>`.
    pub fn score(&self, v: &[T], y: usize) -> T {
        dot(v, self.code(y))
    }

    /// The decoding map: `argmax_y <v, c_y>`, ties going to the smallest label.
    pub fn decode(&self, v: &[T]) -> Result<usize> {
        check_dim(self.dim(), v.len(), "decode: vector length must be T-1")?;
        Ok(self.decode_unchecked(v))
    }

    pub(crate) fn decode_unchecked(&self, v: &[T]) -> usize {
        let mut best = 0;
        let mut best_score = self.score(v, 0);
        for y in 1..self.classes {
            let s = self.score(v, y);
            if s > best_score {
                best = y;
                best_score = s;
            }
        }
        best
    }

    /// Row-wise [`decode`](Self::decode) of an `m x (T-1)` matrix.
    pub fn decode_batch(&self, v: &DMatrix<T>) -> Result<Vec<usize>> {
        if v.nrows() == 0 {
            return Ok(Vec::new());
        }
        check_dim(self.dim(), v.ncols(), "decode_batch: column count must be T-1")?;
        let mut row = vec![T::zero(); self.dim()];
        Ok((0..v.nrows())
            .map(|i| {
                for (k, r) in row.iter_mut().enumerate() {
                    *r = v[(i, k)];
                }
                self.decode_unchecked(&row)
            })
            .collect())
    }

    /// The `n x (T-1)` matrix whose `i`-th row is `c_{labels[i]}`.
    pub fn label_matrix(&self, labels: &[usize]) -> Result<DMatrix<T>> {
        self.check_labels(labels)?;
        Ok(DMatrix::from_fn(labels.len(), self.dim(), |i, k| {
            self.codes[(k, labels[i])]
        }))
    }

    pub(crate) fn check_label(&self, y: usize) -> Result<()> {
        if y < self.classes {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                self.classes
            )))
        }
    }

    pub(crate) fn check_labels(&self, labels: &[usize]) -> Result<()> {
        labels.iter().try_for_each(|&y| self.check_label(y))
    }
}

fn column<T: Scalar>(m: &DMatrix<T>, j: usize) -> &[T] {
    let rows = m.nrows();
    &m.as_slice()[j * rows..(j + 1) * rows]
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
