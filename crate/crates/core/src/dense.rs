//! Small dense complex matrix type (column-major) with faer-backed
//! decompositions.

use faer::{MatRef, Side};
use num_complex::Complex64;

use crate::error::{DimerError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Square-or-rectangular dense complex matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DimerError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn outer(psi: &[Complex64]) -> Self {
        Self::from_fn(psi.len(), psi.len(), |r, c| psi[r] * psi[c].conj())
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn as_faer(&self) -> MatRef<'_, Complex64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn from_faer(m: MatRef<'_, Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&mut self, s: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_scaled(&mut self, s: Complex64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += s * b);
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(DimerError::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(DimerError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        Ok(Self::from_faer((self.as_faer() * other.as_faer()).as_ref()))
    }

    /// `max |A − A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut err: f64 = 0.0;
        for c in 0..n {
            for r in c..n {
                err = err.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        err
    }

    /// Replaces the matrix by `(A + A†)/2`.
    pub fn hermitize(&mut self) {
        let n = self.rows;
        for c in 0..n {
            for r in c..n {
                let v = 0.5 * (self[(r, c)] + self[(c, r)].conj());
                self[(r, c)] = v;
                self[(c, r)] = v.conj();
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Eigenvalues of a Hermitian matrix, ascending. Only the lower
    /// triangle is read.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_square() {
            return Err(DimerError::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        self.as_faer()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))
    }

    /// Eigenvalues of a general square matrix.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        if !self.is_square() {
            return Err(DimerError::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        self.as_faer()
            .eigenvalues()
            .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))
    }

    /// Eigenvalues and right eigenvectors (as columns) of a general square
    /// matrix.
    pub fn eigen(&self) -> Result<(Vec<Complex64>, DenseMatrix)> {
        let evd = self
            .as_faer()
            .eigen()
            .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let vals = (0..self.rows).map(|i| s[i]).collect();
        Ok((vals, DenseMatrix::from_faer(evd.U())))
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        self.as_faer()
            .singular_values()
            .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r + c * self.rows]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r + c * self.rows]
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨x|y⟩ = Σ conj(xᵢ) yᵢ`.
pub fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// `y += s·x`.
pub fn axpy(s: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += s * xi);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_eigenvalues_of_pauli_x() {
        let m = DenseMatrix::from_fn(2, 2, |r, c| {
            if r != c {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        let ev = m.hermitian_eigenvalues().unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn general_eigenvalues_of_rotation_generator() {
        let m = DenseMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 1) => Complex64::new(-1.0, 0.0),
            (1, 0) => Complex64::new(1.0, 0.0),
            _ => ZERO,
        });
        let mut ev = m.eigenvalues().unwrap();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn hermitize_removes_antihermitian_part() {
        let mut m = DenseMatrix::from_fn(3, 3, |r, c| Complex64::new(r as f64, c as f64));
        m.hermitize();
        assert!(m.hermiticity_error() < 1e-15);
    }
}
