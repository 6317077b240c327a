//! Slow part of the Liouvillian spectrum: leading eigenvalues, the gap,
//! and equally spaced bands of near-imaginary eigenvalues.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{DimerError, Result};
use crate::krylov::{self, ArnoldiOptions, ShiftInvert, PROPAGATOR_SAFETY};
use crate::model::{build_liouvillian, DimerAction, DimerParams, LiouvillianOperator, ModeCutoffs, SuperOperator};
use crate::rk4::Rk4Propagator;

/// `|λ| < ZERO_THRESHOLD·κ` identifies the stationary eigenvalue.
pub const ZERO_THRESHOLD: f64 = 1e-9;
/// Gaps below this (in units of κ) are flagged as near-degenerate.
pub const NEAR_DEGENERATE: f64 = 1e-4;
/// Largest relative band-fit residual still accepted.
pub const BAND_RESIDUAL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    /// Dense up to `dense_max_dim`, propagator Krylov above.
    Auto,
    Dense,
    /// Arnoldi on `(L − σ)⁻¹` with one sparse LU.
    ShiftInvert,
    /// Arnoldi on the RK4 propagator `exp(τL)`.
    Propagator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub k: usize,
    pub method: SpectrumMethod,
    pub dense_max_dim: usize,
    /// Shift for the shift-invert transformation.
    pub sigma: f64,
    /// Propagation time per Krylov matvec, in units of 1/κ.
    pub tau: f64,
    /// Krylov basis size; `0` picks `2k + 12`.
    pub ncv: usize,
    pub tol: f64,
    pub max_restarts: usize,
    /// Decay rate used to scale the thresholds.
    pub kappa: f64,
    /// `|Re λ| < band_tolerance·κ` selects candidates for band detection.
    pub band_tolerance: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            k: 30,
            method: SpectrumMethod::Auto,
            dense_max_dim: 4096,
            sigma: 0.05,
            tau: 2.0,
            ncv: 0,
            tol: 1e-8,
            max_restarts: 300,
            kappa: 1.0,
            band_tolerance: 0.1,
        }
    }
}

/// Leading eigenvalues with derived gap and band information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub gap: Option<f64>,
    pub near_degenerate: bool,
    pub fundamental_frequency: Option<f64>,
    pub band_multiples: Option<Vec<i64>>,
    /// Largest `‖Lx − λx‖` over the returned pairs (zero for dense).
    pub max_residual: f64,
    /// Largest `|λ_b − λ̄_a|` over conjugate partners (and `2|Im λ|` over
    /// real eigenvalues) before the pairs were averaged.
    pub conjugate_mismatch: f64,
    pub method: SpectrumMethod,
}

/// `k` eigenvalues of largest real part with default options.
pub fn leading_eigenvalues(l: &LiouvillianOperator, k: usize) -> Result<SpectrumResult> {
    leading_eigenvalues_with(
        l,
        &SpectrumOptions {
            k,
            ..Default::default()
        },
    )
}

pub fn leading_eigenvalues_with(
    l: &LiouvillianOperator,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    let n = l.dim();
    check_k(opts.k, n)?;
    let method = match opts.method {
        SpectrumMethod::Auto if n <= opts.dense_max_dim => SpectrumMethod::Dense,
        SpectrumMethod::Auto => SpectrumMethod::Propagator,
        m => m,
    };
    let (eigs, residual) = match method {
        SpectrumMethod::Dense => {
            let dense = DenseMatrix::from_col_major(n, n, l.matrix.to_dense_col_major())?;
            (dense.eigenvalues()?, 0.0)
        }
        SpectrumMethod::ShiftInvert => {
            let si = ShiftInvert::new(l, Complex64::new(opts.sigma, 0.0))?;
            krylov_eigs(&si, l, opts)?
        }
        _ => {
            let prop = Rk4Propagator::covering(l, opts.tau, PROPAGATOR_SAFETY);
            krylov_eigs(&prop, l, opts)?
        }
    };
    Ok(finish(eigs, residual, opts, method))
}

/// Slow spectrum of the dimer Liouvillian; the generator is assembled
/// only for dense or shift-invert solves.
pub fn dimer_spectrum(params: &DimerParams, cutoffs: ModeCutoffs, opts: &SpectrumOptions) -> Result<SpectrumResult> {
    let n = cutoffs.hilbert_dim().pow(2);
    match opts.method {
        SpectrumMethod::Dense | SpectrumMethod::ShiftInvert => {
            leading_eigenvalues_with(&build_liouvillian(params, cutoffs)?, opts)
        }
        SpectrumMethod::Auto if n <= opts.dense_max_dim => {
            leading_eigenvalues_with(&build_liouvillian(params, cutoffs)?, opts)
        }
        _ => leading_eigenvalues_matrix_free(&DimerAction::new(params, cutoffs)?, opts),
    }
}

/// Propagator-Krylov spectrum of a generator that is never assembled.
pub fn leading_eigenvalues_matrix_free<A: SuperOperator>(
    op: &A,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    check_k(opts.k, op.dim())?;
    let prop = Rk4Propagator::covering(op, opts.tau, PROPAGATOR_SAFETY);
    let (eigs, residual) = krylov_eigs(&prop, op, opts)?;
    Ok(finish(eigs, residual, opts, SpectrumMethod::Propagator))
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(DimerError::DimensionMismatch {
            expected: n,
            found: k,
        });
    }
    Ok(())
}

fn krylov_eigs<P, A>(transformed: &P, generator: &A, opts: &SpectrumOptions) -> Result<(Vec<Complex64>, f64)>
where
    P: SuperOperator + ?Sized,
    A: SuperOperator + ?Sized,
{
    let n = generator.dim();
    // One extra so that a conjugate pair at the boundary is not split.
    let nev = (opts.k + 1).min(n - 1);
    let ncv = if opts.ncv == 0 {
        2 * nev + 10
    } else {
        opts.ncv
    }
    .min(n);
    let arnoldi = ArnoldiOptions {
        nev,
        ncv,
        max_restarts: opts.max_restarts,
        tol: opts.tol,
    };
    let pairs = krylov::eigs_largest(transformed, generator, &arnoldi, None)?;
    let residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok((pairs.into_iter().map(|p| p.lambda).collect(), residual))
}

fn finish(
    mut eigs: Vec<Complex64>,
    max_residual: f64,
    opts: &SpectrumOptions,
    method: SpectrumMethod,
) -> SpectrumResult {
    let conjugate_mismatch = symmetrize_conjugates(&mut eigs, 1e-6 * opts.kappa);
    sort_descending(&mut eigs);
    let mut keep = opts.k.min(eigs.len());
    if keep < eigs.len() && keep > 0 {
        let last = eigs[keep - 1];
        let next = eigs[keep];
        if last.im.abs() > ZERO_THRESHOLD && (next - last.conj()).norm() < ZERO_THRESHOLD * 10.0 {
            keep += 1;
        }
    }
    eigs.truncate(keep);
    let gap_info = liouvillian_gap(&eigs, opts.kappa).ok();
    let band = match detect_band_structure(&eigs, opts.band_tolerance, opts.kappa) {
        BandDetection::Found(b) => Some(b),
        _ => None,
    };
    SpectrumResult {
        gap: gap_info.map(|g| g.gap),
        near_degenerate: gap_info.is_some_and(|g| g.near_degenerate),
        fundamental_frequency: band.as_ref().map(|b| b.omega0),
        band_multiples: band.map(|b| b.multiples),
        eigenvalues: eigs,
        max_residual,
        conjugate_mismatch,
        method,
    }
}

fn sort_descending(eigs: &mut [Complex64]) {
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
}

/// The spectrum of a Hermiticity-preserving generator is closed under
/// conjugation; pairs found independently are replaced by their mean.
fn symmetrize_conjugates(eigs: &mut [Complex64], tol: f64) -> f64 {
    let n = eigs.len();
    let mut worst: f64 = 0.0;
    let mut paired = vec![false; n];
    for a in 0..n {
        if paired[a] {
            continue;
        }
        if eigs[a].im.abs() <= ZERO_THRESHOLD {
            worst = worst.max(2.0 * eigs[a].im.abs());
            eigs[a].im = 0.0;
            paired[a] = true;
            continue;
        }
        let partner = (0..n)
            .filter(|&b| b != a && !paired[b] && eigs[b].im * eigs[a].im < 0.0)
            .min_by(|&x, &y| {
                (eigs[x] - eigs[a].conj())
                    .norm()
                    .total_cmp(&(eigs[y] - eigs[a].conj()).norm())
            });
        if let Some(b) = partner {
            if (eigs[b] - eigs[a].conj()).norm() < tol {
                worst = worst.max((eigs[b] - eigs[a].conj()).norm());
                let mean = 0.5 * (eigs[a] + eigs[b].conj());
                eigs[a] = mean;
                eigs[b] = mean.conj();
                paired[b] = true;
            }
        }
        paired[a] = true;
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapInfo {
    pub gap: f64,
    pub near_degenerate: bool,
}

/// `Λ = |Re λ₁|`, with `λ₁` the slowest eigenvalue besides the single
/// stationary one.
pub fn liouvillian_gap(eigs: &[Complex64], kappa: f64) -> Result<GapInfo> {
    let zero: Vec<usize> = (0..eigs.len())
        .filter(|&i| eigs[i].norm() < ZERO_THRESHOLD * kappa)
        .collect();
    match zero.len() {
        1 => {}
        0 => {
            return Err(DimerError::InsufficientData(
                "no eigenvalue within the stationary threshold".into(),
            ))
        }
        count => return Err(DimerError::DegenerateSteadyState { count }),
    }
    let lambda_1 = eigs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != zero[0])
        .map(|(_, l)| l.re)
        .max_by(f64::total_cmp)
        .ok_or_else(|| DimerError::InsufficientData("need at least two eigenvalues".into()))?;
    let gap = lambda_1.abs();
    Ok(GapInfo {
        gap,
        near_degenerate: gap < NEAR_DEGENERATE * kappa,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub omega0: f64,
    /// Integer multiple assigned to each member, in member order.
    pub multiples: Vec<i64>,
    pub members: Vec<Complex64>,
    /// RMS misfit of `Im λ − m ω₀`, relative to `ω₀`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandDetection {
    /// Fewer than three near-imaginary eigenvalues, or none oscillating.
    Absent,
    /// Oscillating eigenvalues exist but are not integer multiples.
    NoBandStructure { residual: f64 },
    Found(BandStructure),
}

/// Fits `Im λⱼ ≈ mⱼ ω₀` over eigenvalues with `|Re λⱼ| < tolerance·κ`.
pub fn detect_band_structure(eigs: &[Complex64], tolerance: f64, kappa: f64) -> BandDetection {
    let members: Vec<Complex64> = eigs
        .iter()
        .copied()
        .filter(|l| l.re.abs() < tolerance * kappa)
        .collect();
    if members.len() < 3 {
        return BandDetection::Absent;
    }
    let scale = members.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
    let guess = members
        .iter()
        .map(|l| l.im.abs())
        .filter(|&w| w > 1e-6 * scale.max(1e-300) && w > ZERO_THRESHOLD * kappa)
        .fold(f64::INFINITY, f64::min);
    if !guess.is_finite() {
        return BandDetection::Absent;
    }
    let multiples: Vec<i64> = members.iter().map(|l| (l.im / guess).round() as i64).collect();
    let num: f64 = members
        .iter()
        .zip(&multiples)
        .map(|(l, &m)| m as f64 * l.im)
        .sum();
    let den: f64 = multiples.iter().map(|&m| (m * m) as f64).sum();
    let omega0 = num / den;
    let rms = (members
        .iter()
        .zip(&multiples)
        .map(|(l, &m)| (l.im - m as f64 * omega0).powi(2))
        .sum::<f64>()
        / members.len() as f64)
        .sqrt();
    let residual = rms / omega0;
    if residual > BAND_RESIDUAL {
        return BandDetection::NoBandStructure { residual };
    }
    BandDetection::Found(BandStructure {
        omega0,
        multiples,
        members,
        residual,
    })
}
