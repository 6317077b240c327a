//! Truncated Fock-space operators on a compressed sparse row (CSR) layout.
//!
//! Single-mode basis is `{|0⟩, …, |n_max⟩}`. Two-mode operators are built
//! with [`kron`], mode 1 being the left factor, so the composite index of
//! `|n₁, n₂⟩` is `n₁·d₂ + n₂`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DimerError, Result};

/// Largest row or column count [`kron`] will produce.
pub const DEFAULT_MAX_DIM: usize = 1 << 24;

/// Magnitude below which entries are removed after arithmetic.
pub const CLEANUP_TOL: f64 = 1e-15;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Photon-number cutoff of a single mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(DimerError::InvalidParameter {
                name: "n_max",
                value: n_max as f64,
                reason: "cutoff must keep at least two Fock states",
            });
        }
        Ok(Self(n_max))
    }

    pub fn n_max(self) -> usize {
        self.0
    }

    /// Hilbert-space dimension `n_max + 1`.
    pub fn dim(self) -> usize {
        self.0 + 1
    }
}

/// Immutable complex sparse matrix in CSR form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplexMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
    drop_tol: f64,
}

impl SparseComplexMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed; entries with magnitude `<= drop_tol` are discarded (with
    /// `drop_tol = 0` only exact zeros go).
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
        drop_tol: f64,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        for &(r, c, _) in &t {
            if r >= rows {
                return Err(DimerError::DimensionMismatch { expected: rows, found: r });
            }
            if c >= cols {
                return Err(DimerError::DimensionMismatch { expected: cols, found: c });
            }
        }
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            let (r, c, mut v) = t[i];
            i += 1;
            while i < t.len() && t[i].0 == r && t[i].1 == c {
                v += t[i].2;
                i += 1;
            }
            if v.norm() > drop_tol {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            drop_tol,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            drop_tol: 0.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn drop_tol(&self) -> f64 {
        self.drop_tol
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Entries of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    fn map_entries(
        &self,
        rows: usize,
        cols: usize,
        f: impl Fn(usize, usize, Complex64) -> (usize, usize, Complex64),
    ) -> Self {
        Self::from_triplets(
            rows,
            cols,
            self.entries().map(|(r, c, v)| f(r, c, v)),
            self.drop_tol,
        )
        .expect("index map stays within the declared dimensions")
    }

    pub fn transpose(&self) -> Self {
        self.map_entries(self.cols, self.rows, |r, c, v| (c, r, v))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        self.map_entries(self.cols, self.rows, |r, c, v| (c, r, v.conj()))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_triplets(
            self.rows,
            self.cols,
            self.entries().map(|(r, c, v)| (r, c, v * s)),
            CLEANUP_TOL,
        )
        .expect("same shape")
    }

    /// `self + other`, cleaned at [`CLEANUP_TOL`].
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(ONE, other)
    }

    /// `self + s·other`, cleaned at [`CLEANUP_TOL`].
    pub fn axpy(&self, s: Complex64, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(DimerError::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Self::from_triplets(
            self.rows,
            self.cols,
            self.entries()
                .chain(other.entries().map(|(r, c, v)| (r, c, v * s))),
            CLEANUP_TOL,
        )
    }

    /// Sparse matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(DimerError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut triplets = Vec::new();
        let mut acc = vec![ZERO; other.cols];
        let mut touched = Vec::new();
        let mut mark = vec![false; other.cols];
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = ZERO;
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, other.cols, triplets, CLEANUP_TOL)
    }

    /// `y = self · x`.
    pub fn matvec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut s = ZERO;
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                s += v * x[c];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Dense copy in column-major order.
    pub fn to_dense_col_major(&self) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows * self.cols];
        for (r, c, v) in self.entries() {
            out[r + c * self.rows] = v;
        }
        out
    }

    /// Largest entrywise magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        match self.axpy(-ONE, other) {
            Ok(d) => d.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }

    /// Largest deviation from Hermiticity, `max |A - A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Max absolute row sum (induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Bosonic annihilation operator: `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(cutoff: FockCutoff) -> SparseComplexMatrix {
    let d = cutoff.dim();
    SparseComplexMatrix::from_triplets(
        d,
        d,
        (1..d).map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0))),
        0.0,
    )
    .expect("indices in range")
}

/// Bosonic creation operator `a†`.
pub fn creation(cutoff: FockCutoff) -> SparseComplexMatrix {
    annihilation(cutoff).adjoint()
}

/// `a†a = diag(0, 1, …, n_max)`. The zero at `|0⟩` is not stored.
pub fn number_operator(cutoff: FockCutoff) -> SparseComplexMatrix {
    let d = cutoff.dim();
    SparseComplexMatrix::from_triplets(
        d,
        d,
        (1..d).map(|n| (n, n, Complex64::new(n as f64, 0.0))),
        0.0,
    )
    .expect("indices in range")
}

pub fn identity(d: usize) -> SparseComplexMatrix {
    SparseComplexMatrix::from_triplets(d, d, (0..d).map(|i| (i, i, ONE)), 0.0)
        .expect("indices in range")
}

/// Kronecker product `a ⊗ b` (mode of `a` is the slow index).
pub fn kron(a: &SparseComplexMatrix, b: &SparseComplexMatrix) -> Result<SparseComplexMatrix> {
    kron_with_limit(a, b, DEFAULT_MAX_DIM)
}

pub fn kron_with_limit(
    a: &SparseComplexMatrix,
    b: &SparseComplexMatrix,
    max_dim: usize,
) -> Result<SparseComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r <= max_dim && c <= max_dim => (r, c),
        _ => {
            return Err(DimerError::DimensionOverflow {
                rows: a.rows.saturating_mul(b.rows),
                cols: a.cols.saturating_mul(b.cols),
                limit: max_dim,
            })
        }
    };
    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut col_idx = Vec::with_capacity(a.nnz() * b.nnz());
    let mut values = Vec::with_capacity(a.nnz() * b.nnz());
    row_ptr.push(0);
    for ra in 0..a.rows {
        for rb in 0..b.rows {
            for (ca, va) in a.row(ra) {
                for (cb, vb) in b.row(rb) {
                    col_idx.push(ca * b.cols + cb);
                    values.push(va * vb);
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(SparseComplexMatrix {
        rows,
        cols,
        row_ptr,
        col_idx,
        values,
        drop_tol: a.drop_tol.max(b.drop_tol),
    })
}
