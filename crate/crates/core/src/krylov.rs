//! Restarted Arnoldi iteration for a few dominant eigenpairs, plus the
//! spectral transformations used to aim it at the slow part of a
//! Liouvillian spectrum.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;

use crate::dense::{axpy, dot, norm2, DenseMatrix};
use crate::error::{DimerError, Result};
use crate::model::{LiouvillianOperator, SuperOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `dt·ρ` used when building RK4 propagators for eigen-solves.
pub const PROPAGATOR_SAFETY: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArnoldiOptions {
    /// Number of wanted eigenpairs.
    pub nev: usize,
    /// Krylov basis size.
    pub ncv: usize,
    pub max_restarts: usize,
    /// Required `‖A x − λ x‖` on the generator for unit `x`.
    pub tol: f64,
}

/// Eigenpair of the generator recovered from the transformed operator.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: Complex64,
    /// Eigenvalue of the transformed operator.
    pub theta: Complex64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

/// `nev` eigenpairs of `transformed` with largest modulus, reported as
/// eigenpairs of `generator` (which must share eigenvectors).
///
/// Uses a thick restart: the wanted Ritz vectors plus a buffer are kept,
/// orthonormalized, and the Arnoldi relation is rebuilt around them.
pub fn eigs_largest<P, A>(
    transformed: &P,
    generator: &A,
    opts: &ArnoldiOptions,
    start: Option<&[Complex64]>,
) -> Result<Vec<EigenPair>>
where
    P: SuperOperator + ?Sized,
    A: SuperOperator + ?Sized,
{
    let n = transformed.dim();
    if opts.nev == 0 || opts.nev >= n {
        return Err(DimerError::DimensionMismatch {
            expected: n.saturating_sub(1),
            found: opts.nev,
        });
    }
    let m = opts.ncv.min(n).max(opts.nev + 2).min(n);

    let mut v: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut v0 = match start {
        Some(s) => s.to_vec(),
        None => default_start(n),
    };
    let nrm = norm2(&v0);
    if !(nrm > 0.0) {
        v0 = default_start(n);
    }
    let nrm = norm2(&v0);
    v0.iter_mut().for_each(|x| *x /= nrm);
    v.push(v0);

    // (m+1) × m projected matrix.
    let mut g = DenseMatrix::zeros(m + 1, m);
    let mut k = 0usize;
    let mut best: Vec<EigenPair> = Vec::new();
    let mut worst_residual = f64::INFINITY;
    let mut w = vec![ZERO; n];

    for _restart in 0..=opts.max_restarts {
        let mut m_eff = m;
        for j in k..m {
            transformed.apply(&v[j], &mut w);
            let mut h = vec![ZERO; j + 1];
            for _pass in 0..2 {
                for (i, vi) in v.iter().enumerate().take(j + 1) {
                    let c = dot(vi, &w);
                    h[i] += c;
                    axpy(-c, vi, &mut w);
                }
            }
            for (i, hi) in h.iter().enumerate() {
                g[(i, j)] += *hi;
            }
            let beta = norm2(&w);
            g[(j + 1, j)] = Complex64::new(beta, 0.0);
            let hnorm = norm2(&h);
            if beta <= 1e-13 * hnorm.max(1e-300) {
                // Invariant subspace found.
                m_eff = j + 1;
                g[(j + 1, j)] = ZERO;
                let fresh = orthogonal_fill(&v[..=j], n, j);
                v.truncate(j + 1);
                v.push(fresh);
                break;
            }
            let next: Vec<Complex64> = w.iter().map(|x| x / beta).collect();
            v.truncate(j + 1);
            v.push(next);
        }

        let h = DenseMatrix::from_fn(m_eff, m_eff, |r, c| g[(r, c)]);
        let (theta, y) = h.eigen()?;
        let mut order: Vec<usize> = (0..m_eff).collect();
        order.sort_by(|&a, &b| theta[b].norm().total_cmp(&theta[a].norm()));

        let nev = opts.nev.min(m_eff);
        let mut pairs = Vec::with_capacity(nev);
        worst_residual = 0.0;
        for &idx in order.iter().take(nev) {
            let mut x = vec![ZERO; n];
            for (jj, vj) in v.iter().enumerate().take(m_eff) {
                axpy(y[(jj, idx)], vj, &mut x);
            }
            let nx = norm2(&x);
            x.iter_mut().for_each(|e| *e /= nx);
            let (lambda, residual) = rayleigh(generator, &x);
            worst_residual = worst_residual.max(residual);
            pairs.push(EigenPair {
                lambda,
                theta: theta[idx],
                vector: x,
                residual,
            });
        }
        best = pairs;
        if worst_residual < opts.tol || m_eff < m {
            return Ok(best);
        }

        // Thick restart around the p dominant Ritz vectors.
        let p_target = (nev + (m - nev) / 2).clamp(nev, m - 1);
        let cols: Vec<Vec<Complex64>> = order
            .iter()
            .take(p_target)
            .map(|&idx| (0..m).map(|r| y[(r, idx)]).collect())
            .collect();
        let q = orthonormalize(cols, 1e-10);
        let p = q.len();
        if p == 0 {
            break;
        }
        // S = Qᴴ H Q, b = g_m Q
        let hq: Vec<Vec<Complex64>> = q
            .iter()
            .map(|qc| (0..m).map(|r| (0..m).map(|c| h[(r, c)] * qc[c]).sum()).collect())
            .collect();
        let mut g_new = DenseMatrix::zeros(m + 1, m);
        for (a, qa) in q.iter().enumerate() {
            for (b, hqb) in hq.iter().enumerate() {
                g_new[(a, b)] = dot(qa, hqb);
            }
        }
        for (b, qb) in q.iter().enumerate() {
            let mut s = ZERO;
            for c in 0..m {
                s += g[(m, c)] * qb[c];
            }
            g_new[(p, b)] = s;
        }
        let mut v_new: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        for qc in &q {
            let mut x = vec![ZERO; n];
            for (jj, vj) in v.iter().enumerate().take(m) {
                axpy(qc[jj], vj, &mut x);
            }
            v_new.push(x);
        }
        v_new.push(v[m].clone());
        v = v_new;
        g = g_new;
        k = p;
    }
    drop(best);
    Err(DimerError::NotConverged {
        what: "Arnoldi iteration",
        residual: worst_residual,
    })
}

/// Rayleigh quotient `x†Ax` of a unit vector and the residual `‖Ax − λx‖`.
pub fn rayleigh<A: SuperOperator + ?Sized>(op: &A, x: &[Complex64]) -> (Complex64, f64) {
    let mut ax = vec![ZERO; x.len()];
    op.apply(x, &mut ax);
    let lambda = dot(x, &ax);
    axpy(-lambda, x, &mut ax);
    (lambda, norm2(&ax))
}

fn default_start(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::new(1.0 + 0.5 * (0.7 * t).sin(), 0.3 * (1.3 * t).cos())
        })
        .collect()
}

/// A unit vector orthogonal to `basis`, used after a lucky breakdown.
fn orthogonal_fill(basis: &[Vec<Complex64>], n: usize, seed: usize) -> Vec<Complex64> {
    let mut w: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = (i + 31 * seed) as f64;
            Complex64::new((0.37 * t).sin(), (0.91 * t).cos())
        })
        .collect();
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, &w);
            axpy(-c, b, &mut w);
        }
    }
    let nrm = norm2(&w);
    if nrm > 0.0 {
        w.iter_mut().for_each(|x| *x /= nrm);
    }
    w
}

/// Modified Gram–Schmidt (two passes), dropping nearly dependent columns.
fn orthonormalize(cols: Vec<Vec<Complex64>>, drop_tol: f64) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(cols.len());
    for mut c in cols {
        let n0 = norm2(&c);
        for _ in 0..2 {
            for q in &out {
                let s = dot(q, &c);
                axpy(-s, q, &mut c);
            }
        }
        let nrm = norm2(&c);
        if nrm > drop_tol * n0.max(1e-300) {
            c.iter_mut().for_each(|x| *x /= nrm);
            out.push(c);
        }
    }
    out
}

/// `(L − σ)⁻¹` through a sparse LU factorization computed once.
pub struct ShiftInvert {
    n: usize,
    lu: Lu<usize, Complex64>,
}

impl ShiftInvert {
    pub fn new(l: &LiouvillianOperator, sigma: Complex64) -> Result<Self> {
        let n = l.dim();
        let mut triplets: Vec<Triplet<usize, usize, Complex64>> = l
            .matrix
            .entries()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        for i in 0..n {
            triplets.push(Triplet::new(i, i, -sigma));
        }
        let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))?;
        Ok(Self { n, lu })
    }
}

impl SuperOperator for ShiftInvert {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let mut rhs = Mat::<Complex64>::from_fn(self.n, 1, |i, _| x[i]);
        self.lu.solve_in_place(rhs.as_mut());
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = rhs[(i, 0)];
        }
    }

    fn spectral_radius_bound(&self) -> f64 {
        f64::INFINITY
    }
}

/// Diagonal generator for tests.
#[cfg(test)]
pub(crate) struct Diagonal(pub Vec<Complex64>);

#[cfg(test)]
impl SuperOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for i in 0..x.len() {
            y[i] = self.0[i] * x[i];
        }
    }
    fn spectral_radius_bound(&self) -> f64 {
        self.0.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rk4::Rk4Propagator;

    #[test]
    fn dominant_eigenvalues_of_diagonal() {
        let vals: Vec<Complex64> = (0..200)
            .map(|i| Complex64::new(-(i as f64) * 0.05, (i % 7) as f64))
            .collect();
        let op = Diagonal(vals.clone());
        let opts = ArnoldiOptions {
            nev: 4,
            ncv: 20,
            max_restarts: 200,
            tol: 1e-10,
        };
        let prop = Rk4Propagator::covering(&op, 3.0, PROPAGATOR_SAFETY);
        let pairs = eigs_largest(&prop, &op, &opts, None).unwrap();
        let mut got: Vec<f64> = pairs.iter().map(|p| p.lambda.re).collect();
        got.sort_by(|a, b| b.total_cmp(a));
        for (g, e) in got.iter().zip([0.0, -0.05, -0.1, -0.15]) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
    }

    #[test]
    fn shift_invert_finds_nearest() {
        let n = 30;
        let triplets = (0..n).map(|i| (i, i, Complex64::new(-(i as f64) - 0.5, 0.3 * i as f64)));
        let m = crate::fock::SparseComplexMatrix::from_triplets(n, n, triplets, 0.0).unwrap();
        let l = LiouvillianOperator {
            hilbert_dim: 0,
            mode_dims: vec![],
            matrix: m,
            vectorization: crate::model::Vectorization::ColumnStacking,
        };
        let si = ShiftInvert::new(&l, Complex64::new(0.05, 0.0)).unwrap();
        let opts = ArnoldiOptions {
            nev: 2,
            ncv: 10,
            max_restarts: 50,
            tol: 1e-10,
        };
        let pairs = eigs_largest(&si, &l, &opts, None).unwrap();
        assert!((pairs[0].lambda - Complex64::new(-0.5, 0.0)).norm() < 1e-10);
        assert!((pairs[1].lambda - Complex64::new(-1.5, 0.3)).norm() < 1e-10);
    }
}
