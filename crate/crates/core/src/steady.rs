//! Density matrices, the stationary state of a Liouvillian, and direct
//! time integration of the master equation.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{check_positive, DimerError, Result};
use crate::krylov::{self, ArnoldiOptions};
use crate::model::{DimerAction, DimerParams, LiouvillianOperator, ModeCutoffs, SuperOperator};
use crate::rk4::{rk4_step, Rk4Propagator, Rk4Workspace};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_SLACK: f64 = 1e-8;

/// Hermitian, unit-trace, positive semidefinite operator on a product of
/// truncated Fock spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DenseMatrix,
    mode_dims: Vec<usize>,
    params_hash: Option<u64>,
}

impl DensityMatrix {
    /// Validates all invariants.
    pub fn new(matrix: DenseMatrix, mode_dims: Vec<usize>) -> Result<Self> {
        let rho = Self::new_unchecked(matrix, mode_dims)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Checks only the shape.
    pub fn new_unchecked(matrix: DenseMatrix, mode_dims: Vec<usize>) -> Result<Self> {
        let d: usize = mode_dims.iter().product();
        if !matrix.is_square() || matrix.rows() != d {
            return Err(DimerError::DimensionMismatch {
                expected: d,
                found: matrix.rows(),
            });
        }
        Ok(Self {
            matrix,
            mode_dims,
            params_hash: None,
        })
    }

    /// `|ψ⟩⟨ψ|` after normalizing `ψ`.
    pub fn pure(psi: &[Complex64], mode_dims: Vec<usize>) -> Result<Self> {
        let norm = crate::dense::norm2(psi);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(DimerError::InvalidDensityMatrix("zero or non-finite state vector".into()));
        }
        let psi: Vec<Complex64> = psi.iter().map(|v| v / norm).collect();
        Self::new_unchecked(DenseMatrix::outer(&psi), mode_dims)
    }

    /// Fock projector `|n₁, n₂, …⟩⟨n₁, n₂, …|`.
    pub fn fock(mode_dims: Vec<usize>, occupations: &[usize]) -> Result<Self> {
        if occupations.len() != mode_dims.len() {
            return Err(DimerError::DimensionMismatch {
                expected: mode_dims.len(),
                found: occupations.len(),
            });
        }
        let mut idx = 0;
        for (&n, &d) in occupations.iter().zip(&mode_dims) {
            if n >= d {
                return Err(DimerError::DimensionMismatch { expected: d, found: n + 1 });
            }
            idx = idx * d + n;
        }
        let d: usize = mode_dims.iter().product();
        let mut m = DenseMatrix::zeros(d, d);
        m[(idx, idx)] = ONE;
        Self::new_unchecked(m, mode_dims)
    }

    pub fn vacuum(mode_dims: Vec<usize>) -> Result<Self> {
        let zeros = vec![0; mode_dims.len()];
        Self::fock(mode_dims, &zeros)
    }

    pub fn maximally_mixed(mode_dims: Vec<usize>) -> Result<Self> {
        let d: usize = mode_dims.iter().product();
        let mut m = DenseMatrix::identity(d);
        m.scale(Complex64::new(1.0 / d as f64, 0.0));
        Self::new_unchecked(m, mode_dims)
    }

    /// `ρ_a ⊗ ρ_b`, with `ρ_a` on the leading modes.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let (da, db) = (self.dim(), other.dim());
        let m = DenseMatrix::from_fn(da * db, da * db, |r, c| {
            self.matrix[(r / db, c / db)] * other.matrix[(r % db, c % db)]
        });
        let mut dims = self.mode_dims.clone();
        dims.extend_from_slice(&other.mode_dims);
        Self::new_unchecked(m, dims)
    }

    /// Hermitizes and rescales to unit trace.
    pub fn from_unnormalized(mut matrix: DenseMatrix, mode_dims: Vec<usize>) -> Result<Self> {
        matrix.hermitize();
        let tr = matrix.trace().re;
        if !(tr.abs() > 0.0 && tr.is_finite()) {
            return Err(DimerError::InvalidDensityMatrix(format!("trace {tr} cannot be normalized")));
        }
        matrix.scale(Complex64::new(1.0 / tr, 0.0));
        Self::new(matrix, mode_dims)
    }

    pub fn with_params_hash(mut self, hash: u64) -> Self {
        self.params_hash = Some(hash);
        self
    }

    pub fn params_hash(&self) -> Option<u64> {
        self.params_hash
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.matrix.hermitian_eigenvalues()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Hermiticity within 1e-10, unit trace within 1e-10, and no eigenvalue
    /// below −1e-8.
    pub fn validate(&self) -> Result<()> {
        let herm = self.matrix.hermiticity_error();
        if !(herm <= HERMITICITY_TOL) {
            return Err(DimerError::NotHermitian(herm));
        }
        let tr = self.matrix.trace();
        if !((tr - ONE).norm() <= TRACE_TOL) {
            return Err(DimerError::InvalidDensityMatrix(format!(
                "trace {tr} differs from 1"
            )));
        }
        let min = self.min_eigenvalue()?;
        if min < -POSITIVITY_SLACK {
            return Err(DimerError::PositivityViolation(min));
        }
        Ok(())
    }
}

/// How the stationary state is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyStateMethod {
    /// Sparse LU up to `lu_max_dim`, Krylov above.
    Auto,
    /// Trace-augmented sparse LU.
    SparseLu,
    /// Dominant eigenvector of the short-time propagator.
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateOptions {
    pub method: SteadyStateMethod,
    /// Largest superoperator dimension handed to sparse LU.
    pub lu_max_dim: usize,
    /// Acceptance threshold relative to `‖L‖∞`.
    pub relative_residual: f64,
    /// Propagation time per Krylov matvec, in units of 1/κ.
    pub krylov_tau: f64,
    pub krylov_ncv: usize,
    pub krylov_max_restarts: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            method: SteadyStateMethod::Auto,
            lu_max_dim: 40_000,
            relative_residual: 1e-9,
            krylov_tau: 2.0,
            krylov_ncv: 20,
            krylov_max_restarts: 400,
        }
    }
}

/// Stationary state of `L`, normalized to unit trace.
pub fn solve_steady_state(l: &LiouvillianOperator) -> Result<DensityMatrix> {
    solve_steady_state_with(l, &SteadyStateOptions::default())
}

pub fn solve_steady_state_with(
    l: &LiouvillianOperator,
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix> {
    let n = l.dim();
    let use_lu = match opts.method {
        SteadyStateMethod::SparseLu => true,
        SteadyStateMethod::Krylov => false,
        SteadyStateMethod::Auto => n <= opts.lu_max_dim,
    };
    let scale = l.matrix.norm_inf().max(f64::MIN_POSITIVE);
    let x = if use_lu {
        match augmented_lu_solve(l) {
            Ok(x) => x,
            Err(DimerError::LinearAlgebra(_)) => krylov_null_vector(l, opts)?,
            Err(e) => return Err(e),
        }
    } else {
        krylov_null_vector(l, opts)?
    };
    finish_steady_state(l, x, scale, opts.relative_residual, &l.mode_dims)
}

/// Stationary state of the dimer, assembling and factoring `L` when it is
/// small enough and working matrix-free otherwise.
pub fn dimer_steady_state(
    params: &DimerParams,
    cutoffs: ModeCutoffs,
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix> {
    let hilbert = cutoffs.hilbert_dim();
    let assemble = match opts.method {
        SteadyStateMethod::SparseLu => true,
        SteadyStateMethod::Krylov => false,
        SteadyStateMethod::Auto => hilbert * hilbert <= opts.lu_max_dim,
    };
    let rho = if assemble {
        solve_steady_state_with(&crate::model::build_liouvillian(params, cutoffs)?, opts)?
    } else {
        let act = DimerAction::new(params, cutoffs)?;
        solve_steady_state_matrix_free(&act, &cutoffs.dims(), opts)?
    };
    Ok(rho.with_params_hash(params.fingerprint()))
}

/// Matrix-free variant for systems too large to assemble or factor.
pub fn solve_steady_state_matrix_free<A: SuperOperator>(
    op: &A,
    mode_dims: &[usize],
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix> {
    let x = krylov_null_vector(op, opts)?;
    let scale = op.spectral_radius_bound();
    finish_steady_state(op, x, scale, opts.relative_residual, mode_dims)
}

fn finish_steady_state<A: SuperOperator + ?Sized>(
    op: &A,
    x: Vec<Complex64>,
    scale: f64,
    relative_residual: f64,
    mode_dims: &[usize],
) -> Result<DensityMatrix> {
    let d = (x.len() as f64).sqrt().round() as usize;
    let mut m = DenseMatrix::from_col_major(d, d, x)?;
    m.hermitize();
    let tr = m.trace().re;
    if !(tr.is_finite() && tr.abs() > 1e-300) {
        return Err(DimerError::MultipleSteadyStates {
            detail: format!("trace of the null vector is {tr}"),
        });
    }
    m.scale(Complex64::new(1.0 / tr, 0.0));
    let mut y = vec![ZERO; d * d];
    op.apply(m.as_slice(), &mut y);
    let residual = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(residual < relative_residual * scale) {
        return Err(DimerError::NotConverged {
            what: "steady state",
            residual: residual / scale,
        });
    }
    DensityMatrix::new(m, mode_dims.to_vec())
}

/// Solves `L x = 0` with the equation for `ρ[0, 0]` replaced by `Tr ρ = 1`.
fn augmented_lu_solve(l: &LiouvillianOperator) -> Result<Vec<Complex64>> {
    let n = l.dim();
    let d = l.hilbert_dim;
    let mut triplets = Vec::with_capacity(l.matrix.nnz() + d);
    for (r, c, v) in l.matrix.entries() {
        if r != 0 {
            triplets.push(Triplet::new(r, c, v));
        }
    }
    for i in 0..d {
        triplets.push(Triplet::new(0, i + i * d, ONE));
    }
    let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| DimerError::LinearAlgebra(format!("{e:?}")))?;
    let mut rhs = Mat::<Complex64>::zeros(n, 1);
    rhs[(0, 0)] = ONE;
    lu.solve_in_place(rhs.as_mut());
    let x: Vec<Complex64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(DimerError::MultipleSteadyStates {
            detail: "trace-augmented system is singular".into(),
        });
    }
    let max = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max > 1e8 {
        return Err(DimerError::MultipleSteadyStates {
            detail: format!("trace-augmented solution has entries of size {max:.3e}"),
        });
    }
    Ok(x)
}

/// Null vector of `op` as the dominant eigenvector of its propagator.
fn krylov_null_vector<A: SuperOperator + ?Sized>(
    op: &A,
    opts: &SteadyStateOptions,
) -> Result<Vec<Complex64>> {
    check_positive("krylov_tau", opts.krylov_tau)?;
    let n = op.dim();
    let d = (n as f64).sqrt().round() as usize;
    let prop = Rk4Propagator::covering(op, opts.krylov_tau, krylov::PROPAGATOR_SAFETY);
    // Start from the maximally mixed state, which has full overlap with ρ_ss.
    let mut start = vec![ZERO; n];
    for i in 0..d {
        start[i + i * d] = ONE;
    }
    let scale = op.spectral_radius_bound().max(1e-300);
    let target = opts.relative_residual * scale * 0.1;
    let arnoldi = ArnoldiOptions {
        nev: 1,
        ncv: opts.krylov_ncv.min(n).max(2),
        max_restarts: opts.krylov_max_restarts,
        tol: target,
    };
    let pairs = krylov::eigs_largest(&prop, op, &arnoldi, Some(&start))?;
    Ok(pairs.into_iter().next().map(|p| p.vector).unwrap_or(start))
}

/// Smallest two singular values of a small explicit Liouvillian. A unique
/// stationary state shows up as `σ₀ ≪ σ₁`.
pub fn nullspace_probe(l: &LiouvillianOperator) -> Result<(f64, f64)> {
    let n = l.dim();
    if n > 4096 {
        return Err(DimerError::DimensionOverflow {
            rows: n,
            cols: n,
            limit: 4096,
        });
    }
    let dense = DenseMatrix::from_col_major(n, n, l.matrix.to_dense_col_major())?;
    let mut sv = dense.singular_values()?;
    sv.sort_by(f64::total_cmp);
    Ok((sv[0], sv.get(1).copied().unwrap_or(f64::INFINITY)))
}

/// A sampled master-equation trajectory.
#[derive(Debug, Clone)]
pub struct MasterTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub steps: usize,
}

/// RK4 integration of the dimer master equation from `rho0`, returning
/// `samples + 1` equally spaced states including both endpoints.
pub fn evolve_master_equation(
    rho0: &DensityMatrix,
    params: &DimerParams,
    t_final: f64,
    dt: f64,
    samples: usize,
) -> Result<MasterTrajectory> {
    let dims = rho0.mode_dims();
    if dims.len() != 2 {
        return Err(DimerError::DimensionMismatch {
            expected: 2,
            found: dims.len(),
        });
    }
    let cutoffs = ModeCutoffs::new(dims[0] - 1, dims[1] - 1)?;
    let action = DimerAction::new(params, cutoffs)?;
    evolve_with(&action, rho0, t_final, dt, samples)
}

/// RK4 integration of `dρ/dt = A ρ` for any generator `A`.
pub fn evolve_with<A: SuperOperator + ?Sized>(
    op: &A,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    samples: usize,
) -> Result<MasterTrajectory> {
    check_positive("dt", dt)?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(DimerError::InvalidParameter {
            name: "t_final",
            value: t_final,
            reason: "must be finite and non-negative",
        });
    }
    let d = rho0.dim();
    if op.dim() != d * d {
        return Err(DimerError::DimensionMismatch {
            expected: op.dim(),
            found: d * d,
        });
    }
    let bound = op.spectral_radius_bound();
    if dt * bound >= 0.1 {
        return Err(DimerError::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "dt times the spectral-radius estimate must stay below 0.1",
        });
    }
    let samples = samples.max(1);
    let steps = ((t_final / dt).round() as usize).max(if t_final > 0.0 { 1 } else { 0 });
    let h = if steps > 0 { t_final / steps as f64 } else { 0.0 };

    let mut x = rho0.matrix().as_slice().to_vec();
    let mut ws = Rk4Workspace::new(x.len());
    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    let mut done = 0usize;
    for s in 1..=samples {
        let target = (steps * s) / samples;
        while done < target {
            rk4_step(op, &mut x, h, &mut ws);
            done += 1;
        }
        let mut m = DenseMatrix::from_col_major(d, d, x.clone())?;
        m.hermitize();
        let drift = (m.trace().re - 1.0).abs();
        if drift > 1e-6 {
            return Err(DimerError::StepSize {
                drift,
                suggested_dt: h / 2.0,
            });
        }
        x.copy_from_slice(m.as_slice());
        let rho = DensityMatrix::new(m, rho0.mode_dims().to_vec())?;
        times.push(done as f64 * h);
        states.push(rho);
    }
    Ok(MasterTrajectory {
        times,
        states,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_liouvillian, single_mode_system, MemoryBudget};
    use crate::fock::FockCutoff;

    #[test]
    fn undriven_steady_state_is_vacuum() {
        let p = DimerParams::symmetric(2.0, 1.0, 1.0, 1.2, 0.0);
        let l = build_liouvillian(&p, ModeCutoffs::uniform(3).unwrap()).unwrap();
        let rho = solve_steady_state(&l).unwrap();
        assert!((rho.matrix()[(0, 0)] - ONE).norm() < 1e-10);
        assert!(rho.matrix().as_slice()[1..].iter().all(|v| v.norm() < 1e-10));
    }

    #[test]
    fn linear_cavity_occupation() {
        let (delta, kappa, f) = (1.3, 1.0, 0.8);
        let sys = single_mode_system(delta, 0.0, kappa, f, FockCutoff::new(20).unwrap()).unwrap();
        let l = sys.liouvillian(MemoryBudget::default()).unwrap();
        let rho = solve_steady_state(&l).unwrap();
        let n: f64 = (0..rho.dim()).map(|k| k as f64 * rho.matrix()[(k, k)].re).sum();
        let expected = f * f / (delta * delta + kappa * kappa / 4.0);
        assert!((n - expected).abs() < 1e-8, "{n} vs {expected}");
    }

    #[test]
    fn krylov_and_lu_agree() {
        let p = DimerParams::symmetric(2.0, 1.0, 1.0, 1.2, 1.5);
        let l = build_liouvillian(&p, ModeCutoffs::uniform(4).unwrap()).unwrap();
        let a = solve_steady_state(&l).unwrap();
        let opts = SteadyStateOptions {
            method: SteadyStateMethod::Krylov,
            ..Default::default()
        };
        let b = solve_steady_state_with(&l, &opts).unwrap();
        let diff = a.matrix().sub(b.matrix()).unwrap().max_abs();
        assert!(diff < 1e-8, "diff {diff}");
    }

    #[test]
    fn fock_decay_is_exponential() {
        let p = DimerParams::symmetric(2.0, 0.0, 1.0, 0.0, 0.0);
        let rho0 = DensityMatrix::fock(vec![3, 3], &[1, 0]).unwrap();
        let traj = evolve_master_equation(&rho0, &p, 1.0, 1e-3, 1).unwrap();
        let last = traj.states.last().unwrap();
        let p1 = last.matrix()[(3, 3)].re;
        assert!((p1 - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn coarse_step_is_refused() {
        let p = DimerParams::symmetric(2.0, 1.0, 1.0, 1.2, 1.5);
        let rho0 = DensityMatrix::vacuum(vec![4, 4]).unwrap();
        assert!(matches!(
            evolve_master_equation(&rho0, &p, 1.0, 0.5, 1),
            Err(DimerError::InvalidParameter { name: "dt", .. })
        ));
    }

    #[test]
    fn validation_rejects_bad_trace_and_negativity() {
        let mut m = DenseMatrix::identity(2);
        assert!(DensityMatrix::new(m.clone(), vec![2]).is_err());
        m[(1, 1)] = Complex64::new(-0.1, 0.0);
        m[(0, 0)] = Complex64::new(1.1, 0.0);
        assert!(matches!(
            DensityMatrix::new(m, vec![2]),
            Err(DimerError::PositivityViolation(_))
        ));
    }

    #[test]
    fn probe_separates_null_vector() {
        let p = DimerParams::symmetric(2.0, 1.0, 1.0, 1.2, 1.5);
        let l = build_liouvillian(&p, ModeCutoffs::uniform(3).unwrap()).unwrap();
        let (s0, s1) = nullspace_probe(&l).unwrap();
        assert!(s1 / s0.max(1e-300) > 1e6);
    }
}
