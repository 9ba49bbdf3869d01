//! Small dense row-major matrix with LU solve, determinant and the full
//! eigenvalue set, backed by nalgebra in double precision.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{HopperError, Result};
use crate::num::{lit, Real};

/// Row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_columns(cols: &[Vec<T>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), r, "ragged columns");
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major storage.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|v| v.to_f64_lossy()))
    }

    pub fn determinant(&self) -> T {
        assert!(self.is_square());
        lit(self.to_nalgebra().determinant())
    }

    /// Solves `self * x = b`; `None` if the matrix is singular.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        assert!(self.is_square());
        assert_eq!(b.len(), self.rows);
        let rhs = DVector::from_iterator(b.len(), b.iter().map(|v| v.to_f64_lossy()));
        let x = self.to_nalgebra().lu().solve(&rhs)?;
        Some(x.iter().map(|v| lit(*v)).collect())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Iteration cap handed to the Schur decomposition.
pub const MAX_QR_SWEEPS: usize = 10_000;

/// All eigenvalues of a real square matrix, unordered, from its real Schur
/// form (Hessenberg reduction followed by shifted QR).
pub fn eigenvalues<T: Real>(m: &Matrix<T>) -> Result<Vec<Complex<T>>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.to_nalgebra(), f64::EPSILON, MAX_QR_SWEEPS)
        .ok_or(HopperError::EigenNoConvergence { sweeps: MAX_QR_SWEEPS })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex::new(lit(z.re), lit(z.im)))
        .collect())
}
