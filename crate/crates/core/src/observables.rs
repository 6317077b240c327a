//! Expectation values, entanglement and entropy measures, and mixtures of
//! coherent states.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix};
use crate::error::{DimerError, Result};
use crate::fock::{FockCutoff, SparseComplexMatrix};
use crate::gp::{sample_cycle, GpParams, LimitCycle};
use crate::model::ModeCutoffs;
use crate::steady::{DensityMatrix, HERMITICITY_TOL, POSITIVITY_SLACK};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigenvalues below this weight contribute nothing to the entropy.
pub const ENTROPY_CUTOFF: f64 = 1e-12;
/// Trace norms within this distance of one count as separable.
pub const NEGATIVITY_FLOOR: f64 = 1e-12;
/// Largest acceptable norm lost when truncating a coherent state.
pub const MAX_TRUNCATION_DEFICIT: f64 = 0.01;

/// Which subsystem the partial transpose acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    First,
    Second,
}

/// `Tr(O ρ)`.
pub fn expectation(rho: &DensityMatrix, op: &SparseComplexMatrix) -> Result<Complex64> {
    let d = rho.dim();
    if op.rows() != d || op.cols() != d {
        return Err(DimerError::DimensionMismatch {
            expected: d,
            found: op.rows(),
        });
    }
    let m = rho.matrix();
    Ok(op.entries().map(|(r, c, v)| v * m[(c, r)]).sum())
}

/// Mean photon number of each mode of a two-mode state.
pub fn photon_numbers(rho: &DensityMatrix) -> Result<(f64, f64)> {
    let [d1, d2] = two_mode_dims(rho)?;
    let m = rho.matrix();
    let (mut n1, mut n2) = (0.0, 0.0);
    for i1 in 0..d1 {
        for i2 in 0..d2 {
            let p = m[(i1 * d2 + i2, i1 * d2 + i2)].re;
            n1 += i1 as f64 * p;
            n2 += i2 as f64 * p;
        }
    }
    Ok((n1, n2))
}

fn two_mode_dims(rho: &DensityMatrix) -> Result<[usize; 2]> {
    match rho.mode_dims() {
        [a, b] => Ok([*a, *b]),
        dims => Err(DimerError::DimensionMismatch {
            expected: 2,
            found: dims.len(),
        }),
    }
}

/// Partial transpose of a two-mode operator, with composite index
/// `i₁·d₂ + i₂`.
pub fn partial_transpose(rho: &DensityMatrix, subsystem: Subsystem) -> Result<DenseMatrix> {
    let [d1, d2] = two_mode_dims(rho)?;
    let m = rho.matrix();
    let d = d1 * d2;
    Ok(DenseMatrix::from_fn(d, d, |r, c| {
        let (i1, i2) = (r / d2, r % d2);
        let (j1, j2) = (c / d2, c % d2);
        match subsystem {
            Subsystem::Second => m[(i1 * d2 + j2, j1 * d2 + i2)],
            Subsystem::First => m[(j1 * d2 + i2, i1 * d2 + j2)],
        }
    }))
}

/// `log₂ ‖ρ^Γ‖₁`, in bits, clamped to zero for trace norms not above one.
pub fn log_negativity(rho: &DensityMatrix, subsystem: Subsystem) -> Result<f64> {
    let herm = rho.matrix().hermiticity_error();
    if herm > HERMITICITY_TOL {
        return Err(DimerError::NotHermitian(herm));
    }
    let pt = partial_transpose(rho, subsystem)?;
    let norm: f64 = pt.hermitian_eigenvalues()?.iter().map(|v| v.abs()).sum();
    Ok(clamp_negativity(norm))
}

fn clamp_negativity(trace_norm: f64) -> f64 {
    if trace_norm <= 1.0 + NEGATIVITY_FLOOR {
        0.0
    } else {
        trace_norm.log2()
    }
}

/// `−Σ p ln p`, in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_of_spectrum(&rho.eigenvalues()?)
}

fn entropy_of_spectrum(eigs: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &p in eigs {
        if p < -POSITIVITY_SLACK {
            return Err(DimerError::PositivityViolation(p));
        }
        if p >= ENTROPY_CUTOFF {
            s -= p * p.ln();
        }
    }
    Ok(s.max(0.0))
}

/// `½ Σ |eig(ρ_a − ρ_b)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(DimerError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let diff = a.matrix().sub(b.matrix())?;
    Ok(0.5 * diff.hermitian_eigenvalues()?.iter().map(|v| v.abs()).sum::<f64>())
}

/// Smallest cutoff keeping a coherent state of amplitude `alpha` well
/// resolved: `n_max ≥ |α|² + 5|α| + 10`.
pub fn coherent_cutoff(alpha: Complex64) -> usize {
    let a = alpha.norm();
    (a * a + 5.0 * a + 10.0).ceil() as usize
}

/// Truncated and renormalized coherent state `|α⟩` in the Fock basis.
pub fn coherent_state(alpha: Complex64, cutoff: FockCutoff) -> Result<Vec<Complex64>> {
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(DimerError::InvalidParameter {
            name: "alpha",
            value: alpha.norm(),
            reason: "must be finite",
        });
    }
    let d = cutoff.dim();
    let mut c = Vec::with_capacity(d);
    let mut amp = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..d {
        if n > 0 {
            amp = amp * alpha / (n as f64).sqrt();
        }
        c.push(amp);
    }
    let kept: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    if 1.0 - kept > MAX_TRUNCATION_DEFICIT {
        return Err(DimerError::CutoffTooSmall { kept_norm: kept });
    }
    let s = kept.sqrt();
    c.iter_mut().for_each(|v| *v /= s);
    Ok(c)
}

/// Equal-weight mixture of two-mode product coherent states,
/// `(1/M) Σₘ |α₁ₘ, α₂ₘ⟩⟨α₁ₘ, α₂ₘ|`.
///
/// Stored as per-mode state vectors so that large cutoffs never require the
/// dense `d × d` matrix.
#[derive(Debug, Clone)]
pub struct CoherentMixture {
    cutoffs: ModeCutoffs,
    amplitudes: Vec<(Complex64, Complex64)>,
    mode_1: Vec<Vec<Complex64>>,
    mode_2: Vec<Vec<Complex64>>,
}

impl CoherentMixture {
    pub fn new(amplitudes: &[(Complex64, Complex64)], cutoffs: ModeCutoffs) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(DimerError::InsufficientData("mixture needs at least one state".into()));
        }
        let mut mode_1 = Vec::with_capacity(amplitudes.len());
        let mut mode_2 = Vec::with_capacity(amplitudes.len());
        for &(a1, a2) in amplitudes {
            mode_1.push(coherent_state(a1, cutoffs.mode_1)?);
            mode_2.push(coherent_state(a2, cutoffs.mode_2)?);
        }
        Ok(Self {
            cutoffs,
            amplitudes: amplitudes.to_vec(),
            mode_1,
            mode_2,
        })
    }

    /// Cutoffs large enough for every amplitude in `amplitudes`.
    pub fn cutoffs_for(amplitudes: &[(Complex64, Complex64)]) -> Result<ModeCutoffs> {
        let n1 = amplitudes.iter().map(|a| coherent_cutoff(a.0)).max().unwrap_or(10);
        let n2 = amplitudes.iter().map(|a| coherent_cutoff(a.1)).max().unwrap_or(10);
        ModeCutoffs::new(n1, n2)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn cutoffs(&self) -> ModeCutoffs {
        self.cutoffs
    }

    pub fn amplitudes(&self) -> &[(Complex64, Complex64)] {
        &self.amplitudes
    }

    /// Mean photon numbers of the truncated states.
    pub fn photon_numbers(&self) -> (f64, f64) {
        let mean = |states: &[Vec<Complex64>]| {
            states
                .iter()
                .map(|s| {
                    s.iter()
                        .enumerate()
                        .map(|(n, v)| n as f64 * v.norm_sqr())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / states.len() as f64
        };
        (mean(&self.mode_1), mean(&self.mode_2))
    }

    /// `Gₘₖ = ⟨ψₘ|ψₖ⟩ / M`, which shares its nonzero spectrum with the
    /// mixture. With `conjugate_second`, mode 2 is complex conjugated,
    /// giving the partial transpose on that mode.
    fn gram(&self, conjugate_second: bool) -> DenseMatrix {
        let m = self.len();
        let inv = 1.0 / m as f64;
        DenseMatrix::from_fn(m, m, |a, b| {
            let o1 = dot(&self.mode_1[a], &self.mode_1[b]);
            let o2 = dot(&self.mode_2[a], &self.mode_2[b]);
            let o2 = if conjugate_second { o2.conj() } else { o2 };
            o1 * o2 * inv
        })
    }

    pub fn entropy(&self) -> Result<f64> {
        let eigs = self.gram(false).hermitian_eigenvalues()?;
        entropy_of_spectrum(&eigs)
    }

    /// Logarithmic negativity, which vanishes for any such mixture since
    /// its partial transpose is again a mixture of product states.
    pub fn log_negativity(&self) -> Result<f64> {
        let eigs = self.gram(true).hermitian_eigenvalues()?;
        Ok(clamp_negativity(eigs.iter().map(|v| v.abs()).sum()))
    }

    /// Dense density matrix; only sensible for small cutoffs.
    pub fn to_density_matrix(&self) -> Result<DensityMatrix> {
        let [d1, d2] = self.cutoffs.dims();
        let d = d1 * d2;
        let mut m = DenseMatrix::zeros(d, d);
        let inv = Complex64::new(1.0 / self.len() as f64, 0.0);
        let mut psi = vec![ZERO; d];
        for (s1, s2) in self.mode_1.iter().zip(&self.mode_2) {
            for i1 in 0..d1 {
                for i2 in 0..d2 {
                    psi[i1 * d2 + i2] = s1[i1] * s2[i2];
                }
            }
            for c in 0..d {
                let pc = psi[c].conj() * inv;
                if pc == ZERO {
                    continue;
                }
                for r in 0..d {
                    m[(r, c)] += psi[r] * pc;
                }
            }
        }
        m.hermitize();
        DensityMatrix::new(m, vec![d1, d2])
    }
}

/// Mixture of coherent states along a cycle of unscaled field amplitudes.
pub fn time_averaged_rho(
    cycle: &[(Complex64, Complex64)],
    cutoffs: ModeCutoffs,
) -> Result<CoherentMixture> {
    CoherentMixture::new(cycle, cutoffs)
}

/// Samples per cycle tried first by [`converged_time_average`].
pub const CYCLE_SAMPLES: usize = 64;

/// Time-averaged state of a mean-field limit cycle with the number of
/// samples doubled from [`CYCLE_SAMPLES`] until photon numbers and entropy
/// change by less than `rel_tol`.
pub fn converged_time_average(
    lc: &LimitCycle,
    p: &GpParams,
    u: f64,
    rel_tol: f64,
    max_samples: usize,
) -> Result<(CoherentMixture, ObservableReport)> {
    if !(u > 0.0) {
        return Err(DimerError::InvalidParameter { name: "u", value: u, reason: "must be positive" });
    }
    let build = |m: usize| -> Result<(CoherentMixture, ObservableReport)> {
        let cycle: Vec<(Complex64, Complex64)> = sample_cycle(lc, p, m, 1e-3)?
            .iter()
            .map(|s| s.unscaled(u))
            .collect();
        let mix = time_averaged_rho(&cycle, CoherentMixture::cutoffs_for(&cycle)?)?;
        let rep = ObservableReport::from_mixture(&mix, u)?;
        Ok((mix, rep))
    };
    let mut m = CYCLE_SAMPLES;
    let mut prev = build(m)?;
    while 2 * m <= max_samples {
        m *= 2;
        let next = build(m)?;
        let change = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
        let (a, b) = (&prev.1, &next.1);
        let settled = change(a.n1, b.n1) < rel_tol && change(a.n2, b.n2) < rel_tol && change(a.s, b.s) < rel_tol;
        prev = next;
        if settled {
            return Ok(prev);
        }
    }
    Err(DimerError::NotConverged { what: "time-averaged state sample count", residual: rel_tol })
}

/// Summary of a two-mode state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub n1: f64,
    pub n2: f64,
    /// `n1 − n2`.
    pub z: f64,
    /// Logarithmic negativity in bits.
    pub e_n: f64,
    /// Von Neumann entropy in nats.
    pub s: f64,
    pub u_n1: f64,
    pub u_n2: f64,
}

impl ObservableReport {
    pub fn from_parts(n1: f64, n2: f64, e_n: f64, s: f64, u: f64) -> Self {
        let (n1, n2) = (n1.max(0.0), n2.max(0.0));
        Self {
            n1,
            n2,
            z: n1 - n2,
            e_n,
            s,
            u_n1: u * n1,
            u_n2: u * n2,
        }
    }

    pub fn from_density_matrix(rho: &DensityMatrix, u: f64) -> Result<Self> {
        let (n1, n2) = photon_numbers(rho)?;
        let e_n = log_negativity(rho, Subsystem::Second)?;
        let s = von_neumann_entropy(rho)?;
        Ok(Self::from_parts(n1, n2, e_n, s, u))
    }

    pub fn from_mixture(mix: &CoherentMixture, u: f64) -> Result<Self> {
        let (n1, n2) = mix.photon_numbers();
        Ok(Self::from_parts(n1, n2, mix.log_negativity()?, mix.entropy()?, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock;

    fn bell() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = vec![ZERO; 4];
        psi[0] = Complex64::new(s, 0.0);
        psi[3] = Complex64::new(s, 0.0);
        DensityMatrix::pure(&psi, vec![2, 2]).unwrap()
    }

    #[test]
    fn bell_state_has_one_bit() {
        let rho = bell();
        for sub in [Subsystem::First, Subsystem::Second] {
            assert!((log_negativity(&rho, sub).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-10);
    }

    #[test]
    fn vacuum_expectations() {
        let rho = DensityMatrix::vacuum(vec![4]).unwrap();
        let n = fock::number_operator(FockCutoff::new(3).unwrap());
        assert_eq!(expectation(&rho, &n).unwrap(), ZERO);
        let id = fock::identity(4);
        assert!((expectation(&rho, &id).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_mean_photon_number() {
        let alpha = Complex64::new(1.2, -0.7);
        let psi = coherent_state(alpha, FockCutoff::new(30).unwrap()).unwrap();
        let rho = DensityMatrix::pure(&psi, vec![31]).unwrap();
        let n = fock::number_operator(FockCutoff::new(30).unwrap());
        let got = expectation(&rho, &n).unwrap().re;
        assert!((got - alpha.norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn truncation_deficit_is_reported() {
        let err = coherent_state(Complex64::new(4.0, 0.0), FockCutoff::new(5).unwrap());
        assert!(matches!(err, Err(DimerError::CutoffTooSmall { .. })));
        assert!(coherent_cutoff(Complex64::new(3.0, 4.0)) == 60);
    }

    #[test]
    fn maximally_mixed_entropy() {
        let rho = DensityMatrix::maximally_mixed(vec![3, 4]).unwrap();
        assert!((von_neumann_entropy(&rho).unwrap() - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn half_mixed_times_vacuum_is_ln2() {
        let a = DensityMatrix::maximally_mixed(vec![2]).unwrap();
        let b = DensityMatrix::vacuum(vec![3]).unwrap();
        let rho = a.tensor(&b).unwrap();
        assert!((von_neumann_entropy(&rho).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_of_orthogonal_states() {
        let a = DensityMatrix::fock(vec![3], &[0]).unwrap();
        let b = DensityMatrix::fock(vec![3], &[2]).unwrap();
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_distance(&a, &a).unwrap().abs() < 1e-15);
    }

    #[test]
    fn fixed_point_mixture_is_pure() {
        let amp = (Complex64::new(0.8, 0.3), Complex64::new(-0.2, 0.5));
        let c = ModeCutoffs::uniform(12).unwrap();
        let mix = time_averaged_rho(&[amp; 5], c).unwrap();
        assert!(mix.entropy().unwrap().abs() < 1e-10);
        let dense = mix.to_density_matrix().unwrap();
        assert!(von_neumann_entropy(&dense).unwrap().abs() < 1e-8);
    }

    #[test]
    fn opposite_coherent_states_give_ln2() {
        let a = Complex64::new(4.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let amps = [(a, z), (-a, z)];
        let c = CoherentMixture::cutoffs_for(&amps).unwrap();
        let mix = time_averaged_rho(&amps, c).unwrap();
        assert!((mix.entropy().unwrap() - 2f64.ln()).abs() < 1e-8);
        assert_eq!(mix.log_negativity().unwrap(), 0.0);
    }

    #[test]
    fn gram_and_dense_agree() {
        let amps: Vec<_> = (0..6)
            .map(|k| {
                let t = k as f64;
                (Complex64::from_polar(1.0, t), Complex64::from_polar(0.6, 2.0 * t))
            })
            .collect();
        let c = ModeCutoffs::uniform(14).unwrap();
        let mix = time_averaged_rho(&amps, c).unwrap();
        let dense = mix.to_density_matrix().unwrap();
        let s_dense = von_neumann_entropy(&dense).unwrap();
        assert!((s_dense - mix.entropy().unwrap()).abs() < 1e-8);
        let (n1, n2) = photon_numbers(&dense).unwrap();
        let (m1, m2) = mix.photon_numbers();
        assert!((n1 - m1).abs() < 1e-10 && (n2 - m2).abs() < 1e-10);
        assert_eq!(log_negativity(&dense, Subsystem::Second).unwrap(), 0.0);
    }
}
