//! Dimer Hamiltonian and Liouvillian superoperator.
//!
//! In the frame rotating at the pump frequency
//!
//! ```text
//! H = Σᵢ [−Δᵢ a†ᵢaᵢ + (Uᵢ/2) a†ᵢa†ᵢaᵢaᵢ] − J(a†₁a₂ + a₁a†₂) + F(a†₁ + a₁)
//! dρ/dt = −i[H, ρ] + Σᵢ κᵢ (aᵢρa†ᵢ − ½{a†ᵢaᵢ, ρ})
//! ```
//!
//! Density matrices are vectorized by stacking columns, so that
//! `vec(AXB) = (Bᵀ ⊗ A) vec(X)` and entry `ρ[r, c]` sits at `r + c·d`.

use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{check_finite, check_positive, DimerError, Result};
use crate::fock::{self, FockCutoff, SparseComplexMatrix};
use crate::steady::DensityMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Physical parameters of the (possibly asymmetric) dimer, in units of κ₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerParams {
    pub delta_1: f64,
    pub delta_2: f64,
    pub u_1: f64,
    pub u_2: f64,
    pub kappa_1: f64,
    pub kappa_2: f64,
    pub j: f64,
    pub f: f64,
}

impl DimerParams {
    /// Equal detuning, interaction and loss on both sites.
    pub fn symmetric(delta: f64, u: f64, kappa: f64, j: f64, f: f64) -> Self {
        Self {
            delta_1: delta,
            delta_2: delta,
            u_1: u,
            u_2: u,
            kappa_1: kappa,
            kappa_2: kappa,
            j,
            f,
        }
    }

    /// Symmetric dimer on the thermodynamic-limit family of `point`.
    pub fn from_scaling(delta: f64, j: f64, kappa: f64, point: ScalingPoint) -> Result<Self> {
        let f = point.drive(kappa)?;
        Ok(Self::symmetric(delta, point.u, kappa, j, f))
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("delta_1", self.delta_1)?;
        check_finite("delta_2", self.delta_2)?;
        check_finite("u_1", self.u_1)?;
        check_finite("u_2", self.u_2)?;
        check_positive("kappa_1", self.kappa_1)?;
        check_positive("kappa_2", self.kappa_2)?;
        check_finite("j", self.j)?;
        check_finite("f", self.f)?;
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.delta_1 == self.delta_2 && self.u_1 == self.u_2 && self.kappa_1 == self.kappa_2
    }

    /// Rescaled drive `F√U₁/κ₁^{3/2}`.
    pub fn f_tilde(&self) -> f64 {
        self.f * self.u_1.sqrt() / self.kappa_1.powf(1.5)
    }

    /// Stable hash of the bit patterns, used to tag derived data.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in [
            self.delta_1,
            self.delta_2,
            self.u_1,
            self.u_2,
            self.kappa_1,
            self.kappa_2,
            self.j,
            self.f,
        ] {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// A point on the `U → 0`, `U·F²` fixed family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub u: f64,
    pub f_tilde: f64,
}

impl ScalingPoint {
    pub fn new(u: f64, f_tilde: f64) -> Result<Self> {
        check_positive("u", u)?;
        check_finite("f_tilde", f_tilde)?;
        if f_tilde < 0.0 {
            return Err(DimerError::InvalidParameter {
                name: "f_tilde",
                value: f_tilde,
                reason: "must be non-negative",
            });
        }
        Ok(Self { u, f_tilde })
    }

    /// Drive amplitude `F = F̃ κ^{3/2} / √U`.
    pub fn drive(&self, kappa: f64) -> Result<f64> {
        check_positive("u", self.u)?;
        check_positive("kappa", kappa)?;
        Ok(self.f_tilde * kappa.powf(1.5) / self.u.sqrt())
    }
}

/// Per-mode photon cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeCutoffs {
    pub mode_1: FockCutoff,
    pub mode_2: FockCutoff,
}

impl ModeCutoffs {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        Ok(Self {
            mode_1: FockCutoff::new(n1)?,
            mode_2: FockCutoff::new(n2)?,
        })
    }

    pub fn uniform(n_max: usize) -> Result<Self> {
        Self::new(n_max, n_max)
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.mode_1.dim(), self.mode_2.dim()]
    }

    pub fn hilbert_dim(&self) -> usize {
        self.mode_1.dim() * self.mode_2.dim()
    }
}

/// Hamiltonian plus weighted jump operators on a (product) Hilbert space.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    pub hamiltonian: SparseComplexMatrix,
    /// `(rate, L)` pairs entering `rate·(LρL† − ½{L†L, ρ})`.
    pub jumps: Vec<(f64, SparseComplexMatrix)>,
    pub mode_dims: Vec<usize>,
}

impl OpenSystem {
    pub fn hilbert_dim(&self) -> usize {
        self.hamiltonian.rows()
    }

    /// Explicit sparse Liouvillian, refused if it would exceed `budget`.
    pub fn liouvillian(&self, budget: MemoryBudget) -> Result<LiouvillianOperator> {
        let d = self.hilbert_dim();
        let required = self.estimated_liouvillian_bytes();
        if required > budget.max_bytes {
            return Err(DimerError::BudgetExceeded {
                required_bytes: required,
                budget_bytes: budget.max_bytes,
            });
        }
        let id = fock::identity(d);
        let h = &self.hamiltonian;
        // −i(I⊗H − Hᵀ⊗I)
        let mut l = fock::kron(&id, h)?
            .axpy(-ONE, &fock::kron(&h.transpose(), &id)?)?
            .scale(-I);
        for (rate, op) in &self.jumps {
            let n = op.adjoint().matmul(op)?;
            let gain = fock::kron(&op.conj(), op)?;
            let loss = fock::kron(&id, &n)?.add(&fock::kron(&n.transpose(), &id)?)?;
            l = l
                .axpy(Complex64::new(*rate, 0.0), &gain)?
                .axpy(Complex64::new(-0.5 * rate, 0.0), &loss)?;
        }
        Ok(LiouvillianOperator {
            hilbert_dim: d,
            mode_dims: self.mode_dims.clone(),
            matrix: l,
            vectorization: Vectorization::ColumnStacking,
        })
    }

    /// Upper estimate of the explicit CSR footprint (values, indices, row
    /// pointers).
    pub fn estimated_liouvillian_bytes(&self) -> u64 {
        let d = self.hilbert_dim() as u64;
        let h_nnz = self.hamiltonian.nnz() as u64;
        let mut nnz = 2 * h_nnz * d + 2 * d * d;
        for (_, op) in &self.jumps {
            nnz += (op.nnz() as u64).pow(2) + 2 * d * d;
        }
        nnz * 24 + (d * d + 1) * 8
    }

    /// Matrix-free action `ρ ↦ Kρ + ρK† + Σ γ LρL†` with
    /// `K = −iH − ½ Σ γ L†L`.
    pub fn action(&self) -> Result<LiouvillianAction> {
        let d = self.hilbert_dim();
        let mut k = self.hamiltonian.scale(-I);
        for (rate, op) in &self.jumps {
            let n = op.adjoint().matmul(op)?;
            k = k.axpy(Complex64::new(-0.5 * rate, 0.0), &n)?;
        }
        Ok(LiouvillianAction {
            d,
            mode_dims: self.mode_dims.clone(),
            k,
            jumps: self.jumps.clone(),
        })
    }
}

/// Hamiltonian of the dimer on the two-mode truncated space.
pub fn build_hamiltonian(params: &DimerParams, cutoffs: ModeCutoffs) -> Result<SparseComplexMatrix> {
    params.validate()?;
    let [d1, d2] = cutoffs.dims();
    let a = fock::annihilation(cutoffs.mode_1);
    let b = fock::annihilation(cutoffs.mode_2);
    let a1 = fock::kron(&a, &fock::identity(d2))?;
    let a2 = fock::kron(&fock::identity(d1), &b)?;
    let dim = d1 * d2;

    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::new();
    // Diagonal: −Δᵢnᵢ + (Uᵢ/2) nᵢ(nᵢ−1)
    for n1 in 0..d1 {
        for n2 in 0..d2 {
            let (x1, x2) = (n1 as f64, n2 as f64);
            let e = -params.delta_1 * x1
                + 0.5 * params.u_1 * x1 * (x1 - 1.0)
                - params.delta_2 * x2
                + 0.5 * params.u_2 * x2 * (x2 - 1.0);
            triplets.push((n1 * d2 + n2, n1 * d2 + n2, Complex64::new(e, 0.0)));
        }
    }
    let hop = a1.adjoint().matmul(&a2)?;
    let drive = a1.adjoint().add(&a1)?;
    let mut h = SparseComplexMatrix::from_triplets(dim, dim, triplets, 0.0)?;
    h = h
        .axpy(Complex64::new(-params.j, 0.0), &hop)?
        .axpy(Complex64::new(-params.j, 0.0), &hop.adjoint())?
        .axpy(Complex64::new(params.f, 0.0), &drive)?;
    Ok(h)
}

/// Hamiltonian and loss channels of the dimer.
pub fn dimer_system(params: &DimerParams, cutoffs: ModeCutoffs) -> Result<OpenSystem> {
    let h = build_hamiltonian(params, cutoffs)?;
    let [d1, d2] = cutoffs.dims();
    let a1 = fock::kron(&fock::annihilation(cutoffs.mode_1), &fock::identity(d2))?;
    let a2 = fock::kron(&fock::identity(d1), &fock::annihilation(cutoffs.mode_2))?;
    Ok(OpenSystem {
        hamiltonian: h,
        jumps: vec![(params.kappa_1, a1), (params.kappa_2, a2)],
        mode_dims: vec![d1, d2],
    })
}

/// A single driven Kerr cavity, `H = −Δa†a + (U/2)a†a†aa + F(a† + a)`.
pub fn single_mode_system(
    delta: f64,
    u: f64,
    kappa: f64,
    f: f64,
    cutoff: FockCutoff,
) -> Result<OpenSystem> {
    check_finite("delta", delta)?;
    check_finite("u", u)?;
    check_positive("kappa", kappa)?;
    check_finite("f", f)?;
    let d = cutoff.dim();
    let a = fock::annihilation(cutoff);
    let diag = (0..d).map(|n| {
        let x = n as f64;
        (n, n, Complex64::new(-delta * x + 0.5 * u * x * (x - 1.0), 0.0))
    });
    let h = SparseComplexMatrix::from_triplets(d, d, diag, 0.0)?
        .axpy(Complex64::new(f, 0.0), &a.adjoint().add(&a)?)?;
    Ok(OpenSystem {
        hamiltonian: h,
        jumps: vec![(kappa, a)],
        mode_dims: vec![d],
    })
}

/// Vectorization convention carried by every Liouvillian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vectorization {
    /// `vec(ρ)[r + c·d] = ρ[r, c]`.
    ColumnStacking,
}

/// Byte budget for explicit superoperator storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub max_bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        Self {
            max_bytes: 1 << 30,
        }
    }
}

/// Explicit sparse Liouvillian of shape `(d², d²)`.
#[derive(Debug, Clone)]
pub struct LiouvillianOperator {
    pub hilbert_dim: usize,
    pub mode_dims: Vec<usize>,
    pub matrix: SparseComplexMatrix,
    pub vectorization: Vectorization,
}

impl LiouvillianOperator {
    /// Superoperator dimension `d²`.
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Largest column sum of `|vec(I)ᴴ L|`, which vanishes for a
    /// trace-preserving generator.
    pub fn trace_preservation_error(&self) -> f64 {
        let d = self.hilbert_dim;
        let mut col = vec![ZERO; self.dim()];
        for i in 0..d {
            for (c, v) in self.matrix.row(i + i * d) {
                col[c] += v;
            }
        }
        col.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// A linear map on vectorized density matrices.
pub trait SuperOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`. `y` is overwritten.
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
    /// Bound on the spectral radius, used to pick stable time steps.
    fn spectral_radius_bound(&self) -> f64;
}

impl SuperOperator for LiouvillianOperator {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.matrix.matvec_into(x, y);
    }

    fn spectral_radius_bound(&self) -> f64 {
        // Gershgorin: |λ| ≤ max_r (|L_rr| + Σ_{c≠r} |L_rc|).
        self.matrix.norm_inf()
    }
}

/// Matrix-free Liouvillian application on column-major `d × d` blocks.
#[derive(Debug, Clone)]
pub struct LiouvillianAction {
    d: usize,
    mode_dims: Vec<usize>,
    k: SparseComplexMatrix,
    jumps: Vec<(f64, SparseComplexMatrix)>,
}

impl LiouvillianAction {
    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    /// Applies the generator to one column block `j` of the output.
    fn apply_column(&self, x: &[Complex64], j: usize, yj: &mut [Complex64]) {
        let d = self.d;
        let k = &self.k;
        let (rp, ci, vals) = (k.row_ptr(), k.col_indices(), k.values());
        let xj = &x[j * d..(j + 1) * d];
        // (Kρ)[:, j]
        for (r, out) in yj.iter_mut().enumerate() {
            let mut s = ZERO;
            for p in rp[r]..rp[r + 1] {
                s += vals[p] * xj[ci[p]];
            }
            *out = s;
        }
        // (ρK†)[:, j] = Σ_c conj(K[j, c]) ρ[:, c]
        for p in rp[j]..rp[j + 1] {
            let w = vals[p].conj();
            let xc = &x[ci[p] * d..(ci[p] + 1) * d];
            for (out, v) in yj.iter_mut().zip(xc) {
                *out += w * v;
            }
        }
        // γ (LρL†)[:, j] = γ Σ_l conj(L[j, l]) Σ_k L[r, k] ρ[k, l]
        for (rate, op) in &self.jumps {
            let (lrp, lci, lv) = (op.row_ptr(), op.col_indices(), op.values());
            for p in lrp[j]..lrp[j + 1] {
                let w = lv[p].conj() * *rate;
                let xl = &x[lci[p] * d..(lci[p] + 1) * d];
                for (r, out) in yj.iter_mut().enumerate() {
                    let mut s = ZERO;
                    for q in lrp[r]..lrp[r + 1] {
                        s += lv[q] * xl[lci[q]];
                    }
                    *out += w * s;
                }
            }
        }
    }
}

impl SuperOperator for LiouvillianAction {
    fn dim(&self) -> usize {
        self.d * self.d
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.d;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(y.len(), d * d);
        y.par_chunks_mut(d)
            .enumerate()
            .for_each(|(j, yj)| self.apply_column(x, j, yj));
    }

    fn spectral_radius_bound(&self) -> f64 {
        // Gershgorin discs of the superoperator, whose diagonal entry for
        // (r, c) is K_rr + conj(K_cc) + Σγ L_rr conj(L_cc).
        let d = self.d;
        let diag: Vec<Complex64> = (0..d).map(|r| self.k.get(r, r)).collect();
        let off: Vec<f64> = (0..d)
            .map(|r| {
                self.k
                    .row(r)
                    .filter(|&(c, _)| c != r)
                    .map(|(_, v)| v.norm())
                    .sum()
            })
            .collect();
        let jump_rows: Vec<Vec<f64>> = self
            .jumps
            .iter()
            .map(|(_, op)| (0..d).map(|r| op.row(r).map(|(_, v)| v.norm()).sum()).collect())
            .collect();
        let mut bound: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let mut s = (diag[r] + diag[c].conj()).norm() + off[r] + off[c];
                for ((rate, _), rows) in self.jumps.iter().zip(&jump_rows) {
                    s += rate * rows[r] * rows[c];
                }
                bound = bound.max(s);
            }
        }
        bound
    }
}

/// Stencil form of the dimer Liouvillian, exploiting the fixed
/// neighbour structure of hopping, drive and loss on the two-mode lattice.
#[derive(Debug, Clone)]
pub struct DimerAction {
    d1: usize,
    d2: usize,
    /// Diagonal of `K = −iH − ½Σκᵢnᵢ`.
    k_diag: Vec<Complex64>,
    /// `K` element for one hop, `iJ` times the Bose factors.
    hop: Complex64,
    /// `K` element for one drive quantum, `−iF` times the Bose factor.
    drive: Complex64,
    kappa_1: f64,
    kappa_2: f64,
    sq: Vec<f64>,
}

impl DimerAction {
    pub fn new(params: &DimerParams, cutoffs: ModeCutoffs) -> Result<Self> {
        params.validate()?;
        let [d1, d2] = cutoffs.dims();
        let mut k_diag = Vec::with_capacity(d1 * d2);
        for m1 in 0..d1 {
            for m2 in 0..d2 {
                let (x1, x2) = (m1 as f64, m2 as f64);
                let e = -params.delta_1 * x1 + 0.5 * params.u_1 * x1 * (x1 - 1.0) - params.delta_2 * x2
                    + 0.5 * params.u_2 * x2 * (x2 - 1.0);
                let loss = 0.5 * (params.kappa_1 * x1 + params.kappa_2 * x2);
                k_diag.push(Complex64::new(-loss, -e));
            }
        }
        Ok(Self {
            d1,
            d2,
            k_diag,
            hop: Complex64::new(0.0, params.j),
            drive: Complex64::new(0.0, -params.f),
            kappa_1: params.kappa_1,
            kappa_2: params.kappa_2,
            sq: (0..=d1.max(d2)).map(|n| (n as f64).sqrt()).collect(),
        })
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d1 * self.d2
    }

    /// `y = K x` for one column.
    fn k_apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (d1, d2, sq) = (self.d1, self.d2, &self.sq);
        for m1 in 0..d1 {
            let base = m1 * d2;
            let up = m1 + 1 < d1;
            let f_dn = self.drive * sq[m1];
            let f_up = if up { self.drive * sq[m1 + 1] } else { ZERO };
            for m2 in 0..d2 {
                let r = base + m2;
                let mut s = self.k_diag[r] * x[r];
                if m1 > 0 {
                    s += f_dn * x[r - d2];
                    if m2 + 1 < d2 {
                        s += self.hop * (sq[m1] * sq[m2 + 1]) * x[r - d2 + 1];
                    }
                }
                if up {
                    s += f_up * x[r + d2];
                    if m2 > 0 {
                        s += self.hop * (sq[m1 + 1] * sq[m2]) * x[r + d2 - 1];
                    }
                }
                y[r] = s;
            }
        }
    }

    /// `y += w·a₁x` and `y += v·a₂x'` for one column.
    fn jump_apply(&self, w1: Complex64, x1: Option<&[Complex64]>, w2: Complex64, x2: Option<&[Complex64]>, y: &mut [Complex64]) {
        let (d1, d2, sq) = (self.d1, self.d2, &self.sq);
        if let Some(x) = x1 {
            for m1 in 0..d1 - 1 {
                let c = w1 * sq[m1 + 1];
                let (src, dst) = (&x[(m1 + 1) * d2..(m1 + 2) * d2], &mut y[m1 * d2..(m1 + 1) * d2]);
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += c * v;
                }
            }
        }
        if let Some(x) = x2 {
            for m1 in 0..d1 {
                let base = m1 * d2;
                for m2 in 0..d2 - 1 {
                    y[base + m2] += w2 * sq[m2 + 1] * x[base + m2 + 1];
                }
            }
        }
    }

    fn apply_column(&self, x: &[Complex64], c: usize, yc: &mut [Complex64]) {
        let (d1, d2, d, sq) = (self.d1, self.d2, self.hilbert_dim(), &self.sq);
        let col = |k: usize| &x[k * d..(k + 1) * d];
        let (n1, n2) = (c / d2, c % d2);
        self.k_apply(col(c), yc);
        // ρK†: yc += Σ_s conj(K[c, s]) ρ[:, s]
        let mut terms: [(Complex64, usize); 5] = [(ZERO, 0); 5];
        let mut nt = 0;
        terms[nt] = (self.k_diag[c].conj(), c);
        nt += 1;
        if n1 > 0 {
            terms[nt] = ((self.drive * sq[n1]).conj(), c - d2);
            nt += 1;
            if n2 + 1 < d2 {
                terms[nt] = ((self.hop * (sq[n1] * sq[n2 + 1])).conj(), c - d2 + 1);
                nt += 1;
            }
        }
        if n1 + 1 < d1 {
            terms[nt] = ((self.drive * sq[n1 + 1]).conj(), c + d2);
            nt += 1;
            if n2 > 0 {
                terms[nt] = ((self.hop * (sq[n1 + 1] * sq[n2])).conj(), c + d2 - 1);
                nt += 1;
            }
        }
        for &(w, s) in &terms[..nt] {
            for (o, v) in yc.iter_mut().zip(col(s)) {
                *o += w * v;
            }
        }
        // κ aρa†: column c draws on column c + e₁ (mode 1) and c + e₂ (mode 2).
        let (w1, x1) = if n1 + 1 < d1 {
            (Complex64::new(self.kappa_1 * sq[n1 + 1], 0.0), Some(col(c + d2)))
        } else {
            (ZERO, None)
        };
        let (w2, x2) = if n2 + 1 < d2 {
            (Complex64::new(self.kappa_2 * sq[n2 + 1], 0.0), Some(col(c + 1)))
        } else {
            (ZERO, None)
        };
        self.jump_apply(w1, x1, w2, x2, yc);
    }
}

impl SuperOperator for DimerAction {
    fn dim(&self) -> usize {
        let d = self.hilbert_dim();
        d * d
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.hilbert_dim();
        debug_assert_eq!(x.len(), d * d);
        y.par_chunks_mut(d)
            .enumerate()
            .for_each(|(c, yc)| self.apply_column(x, c, yc));
    }

    fn spectral_radius_bound(&self) -> f64 {
        // Gershgorin row sums of the superoperator.
        let (d1, d2, sq) = (self.d1, self.d2, &self.sq);
        let (h, f) = (self.hop.norm(), self.drive.norm());
        let off = |m1: usize, m2: usize| {
            let mut s = 0.0;
            if m1 > 0 {
                s += f * sq[m1];
                if m2 + 1 < d2 {
                    s += h * sq[m1] * sq[m2 + 1];
                }
            }
            if m1 + 1 < d1 {
                s += f * sq[m1 + 1];
                if m2 > 0 {
                    s += h * sq[m1 + 1] * sq[m2];
                }
            }
            s
        };
        let idx: Vec<(usize, usize)> = (0..d1).flat_map(|a| (0..d2).map(move |b| (a, b))).collect();
        let offs: Vec<f64> = idx.iter().map(|&(a, b)| off(a, b)).collect();
        let mut bound: f64 = 0.0;
        for (r, &(m1, m2)) in idx.iter().enumerate() {
            for (c, &(n1, n2)) in idx.iter().enumerate() {
                let mut s = (self.k_diag[r] + self.k_diag[c].conj()).norm() + offs[r] + offs[c];
                if m1 + 1 < d1 && n1 + 1 < d1 {
                    s += self.kappa_1 * sq[m1 + 1] * sq[n1 + 1];
                }
                if m2 + 1 < d2 && n2 + 1 < d2 {
                    s += self.kappa_2 * sq[m2 + 1] * sq[n2 + 1];
                }
                bound = bound.max(s);
            }
        }
        bound
    }
}

/// Explicit Liouvillian of the dimer under the default memory budget.
pub fn build_liouvillian(params: &DimerParams, cutoffs: ModeCutoffs) -> Result<LiouvillianOperator> {
    build_liouvillian_with_budget(params, cutoffs, MemoryBudget::default())
}

pub fn build_liouvillian_with_budget(
    params: &DimerParams,
    cutoffs: ModeCutoffs,
    budget: MemoryBudget,
) -> Result<LiouvillianOperator> {
    dimer_system(params, cutoffs)?.liouvillian(budget)
}

/// `−i[H, ρ] + Σᵢ κᵢ(aᵢρa†ᵢ − ½{a†ᵢaᵢ, ρ})` without forming the
/// superoperator.
pub fn apply_liouvillian(
    params: &DimerParams,
    cutoffs: ModeCutoffs,
    rho: &DensityMatrix,
) -> Result<DenseMatrix> {
    let d = cutoffs.hilbert_dim();
    if rho.dim() != d {
        return Err(DimerError::DimensionMismatch {
            expected: d,
            found: rho.dim(),
        });
    }
    let action = DimerAction::new(params, cutoffs)?;
    let mut out = vec![ZERO; d * d];
    action.apply(rho.matrix().as_slice(), &mut out);
    DenseMatrix::from_col_major(d, d, out)
}
