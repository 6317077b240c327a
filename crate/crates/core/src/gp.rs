//! Mean-field (Gross–Pitaevskii) dynamics of the rescaled fields
//! `αᵢ = √U₁ ⟨aᵢ⟩`: fixed points, Bogoliubov stability, phase diagrams,
//! time integration and limit cycles.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{check_finite, check_positive, DimerError, Result};
use crate::model::DimerParams;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Fixed points must satisfy the field equations to this accuracy.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Distance below which two fixed points are the same.
pub const DEDUP_DISTANCE: f64 = 1e-8;
/// Fields beyond this magnitude count as a divergence.
pub const BLOW_UP: f64 = 1e6;

/// Mean-field parameters in rescaled units. The effective interactions
/// `u_i` are `Uᵢ/U₁`, so `u_1 = 1` for any physical dimer, and
/// `f_eff = F√U₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub delta_1: f64,
    pub delta_2: f64,
    pub u_1: f64,
    pub u_2: f64,
    pub kappa_1: f64,
    pub kappa_2: f64,
    pub j: f64,
    pub f_eff: f64,
}

impl GpParams {
    /// Symmetric dimer at rescaled drive `F̃`.
    pub fn symmetric(delta: f64, j: f64, kappa: f64, f_tilde: f64) -> Self {
        Self {
            delta_1: delta,
            delta_2: delta,
            u_1: 1.0,
            u_2: 1.0,
            kappa_1: kappa,
            kappa_2: kappa,
            j,
            f_eff: f_tilde * kappa.powf(1.5),
        }
    }

    /// Rescaled form of a physical parameter set (requires `U₁ > 0`).
    pub fn from_dimer(p: &DimerParams) -> Result<Self> {
        p.validate()?;
        check_positive("u_1", p.u_1)?;
        Ok(Self {
            delta_1: p.delta_1,
            delta_2: p.delta_2,
            u_1: 1.0,
            u_2: p.u_2 / p.u_1,
            kappa_1: p.kappa_1,
            kappa_2: p.kappa_2,
            j: p.j,
            f_eff: p.f * p.u_1.sqrt(),
        })
    }

    pub fn f_tilde(&self) -> f64 {
        self.f_eff / self.kappa_1.powf(1.5)
    }

    pub fn with_f_tilde(mut self, f_tilde: f64) -> Self {
        self.f_eff = f_tilde * self.kappa_1.powf(1.5);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("delta_1", self.delta_1)?;
        check_finite("delta_2", self.delta_2)?;
        check_finite("u_1", self.u_1)?;
        check_finite("u_2", self.u_2)?;
        check_positive("kappa_1", self.kappa_1)?;
        check_positive("kappa_2", self.kappa_2)?;
        check_finite("j", self.j)?;
        check_finite("f_eff", self.f_eff)?;
        Ok(())
    }

    fn a(&self) -> (Complex64, Complex64) {
        (
            Complex64::new(-self.delta_1, -0.5 * self.kappa_1),
            Complex64::new(-self.delta_2, -0.5 * self.kappa_2),
        )
    }
}

/// Pair of rescaled complex fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GpState {
    pub alpha_1: Complex64,
    pub alpha_2: Complex64,
}

impl GpState {
    pub fn new(alpha_1: Complex64, alpha_2: Complex64) -> Self {
        Self { alpha_1, alpha_2 }
    }

    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn n1(&self) -> f64 {
        self.alpha_1.norm_sqr()
    }

    pub fn n2(&self) -> f64 {
        self.alpha_2.norm_sqr()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        ((self.alpha_1 - other.alpha_1).norm_sqr() + (self.alpha_2 - other.alpha_2).norm_sqr())
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [self.alpha_1, self.alpha_2]
            .iter()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Unscaled amplitudes `⟨aᵢ⟩ = αᵢ/√U`.
    pub fn unscaled(&self, u: f64) -> (Complex64, Complex64) {
        let s = 1.0 / u.sqrt();
        (self.alpha_1 * s, self.alpha_2 * s)
    }

    fn axpy(&self, h: f64, k: &Self) -> Self {
        Self::new(self.alpha_1 + h * k.alpha_1, self.alpha_2 + h * k.alpha_2)
    }
}

/// Time derivative of the fields.
pub fn gp_rhs(s: &GpState, p: &GpParams) -> GpState {
    let (a1, a2) = p.a();
    let (x1, x2) = (s.alpha_1, s.alpha_2);
    let d1 = -I * (a1 * x1 + p.u_1 * x1.norm_sqr() * x1 - p.j * x2 + p.f_eff);
    let d2 = -I * (a2 * x2 + p.u_2 * x2.norm_sqr() * x2 - p.j * x1);
    GpState::new(d1, d2)
}

/// Stability class of a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    AmplitudeUnstable,
    ParametricallyUnstable,
}

impl Stability {
    pub fn short(&self) -> &'static str {
        match self {
            Stability::Stable => "S",
            Stability::AmplitudeUnstable => "A",
            Stability::ParametricallyUnstable => "P",
        }
    }
}

/// Fixed point with its linear stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSolution {
    pub state: GpState,
    pub stability: Stability,
    /// Eigenvalues of the linearized flow, `d/dt` convention.
    pub bogoliubov_rates: [Complex64; 4],
    pub residual: f64,
}

/// Largest component of the field equations.
pub fn residual(s: &GpState, p: &GpParams) -> f64 {
    let r = gp_rhs(s, p);
    r.alpha_1.norm().max(r.alpha_2.norm())
}

/// Roots of `Σ cₖ xᵏ` (ascending coefficients) from the companion matrix.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    let comp = DenseMatrix::from_fn(deg, deg, |r, c| {
        if c == deg - 1 {
            Complex64::new(-coeffs[r] / lead, 0.0)
        } else if r == c + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            ZERO
        }
    });
    comp.eigenvalues()
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(c: &[f64], x: f64) -> (f64, f64) {
    let (mut v, mut dv) = (0.0, 0.0);
    for &ck in c.iter().rev() {
        dv = dv * x + v;
        v = v * x + ck;
    }
    (v, dv)
}

/// Real non-negative roots of `coeffs`, polished by Newton steps.
fn nonnegative_real_roots(coeffs: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in polynomial_roots(coeffs)? {
        let tol = 1e-5 * (1.0 + r.norm());
        if r.im.abs() > tol || r.re < -tol {
            continue;
        }
        let mut x = r.re.max(0.0);
        for _ in 0..50 {
            let (v, dv) = poly_eval(coeffs, x);
            if dv == 0.0 {
                break;
            }
            let step = v / dv;
            x = (x - step).max(0.0);
            if step.abs() <= 1e-15 * (1.0 + x) {
                break;
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Newton iteration on the complex field equations.
fn newton_polish(mut s: GpState, p: &GpParams) -> GpState {
    for _ in 0..50 {
        let r = gp_rhs(&s, p);
        if r.alpha_1.norm().max(r.alpha_2.norm()) < 1e-14 {
            break;
        }
        let jac = linearize(&s, p);
        let rhs = [r.alpha_1, r.alpha_1.conj(), r.alpha_2, r.alpha_2.conj()];
        let Some(delta) = solve4(&jac, &rhs) else {
            break;
        };
        s.alpha_1 -= delta[0];
        s.alpha_2 -= delta[2];
    }
    s
}

/// Gaussian elimination with partial pivoting on a 4×4 system.
fn solve4(m: &DenseMatrix, b: &[Complex64; 4]) -> Option<[Complex64; 4]> {
    let mut a = [[ZERO; 5]; 4];
    for r in 0..4 {
        for c in 0..4 {
            a[r][c] = m[(r, c)];
        }
        a[r][4] = b[r];
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))?;
        if a[piv][col].norm() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..5 {
                let t = a[col][c];
                a[r][c] -= f * t;
            }
        }
    }
    let mut x = [ZERO; 4];
    for r in (0..4).rev() {
        let mut s = a[r][4];
        for c in r + 1..4 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// All fixed points, each with its Bogoliubov stability.
pub fn find_steady_states(p: &GpParams) -> Result<Vec<GpSolution>> {
    p.validate()?;
    let (a1, a2) = p.a();
    let f = p.f_eff;
    let mut candidates = Vec::new();
    if p.j == 0.0 {
        // Mode 2 stays empty; mode 1 solves n|A₁ + u₁n|² = F².
        let coeffs = [
            -f * f,
            a1.norm_sqr(),
            2.0 * p.u_1 * a1.re,
            p.u_1 * p.u_1,
        ];
        for n in nonnegative_real_roots(&coeffs)? {
            let alpha_1 = -f / (a1 + p.u_1 * n);
            candidates.push(GpState::new(alpha_1, ZERO));
        }
    } else {
        let j = p.j;
        let j2 = j * j;
        // n₁(n) = n |A₂ + u₂n|² / J²
        let n1 = [
            0.0,
            a2.norm_sqr() / j2,
            2.0 * p.u_2 * a2.re / j2,
            p.u_2 * p.u_2 / j2,
        ];
        // Q(n) = (A₁ + u₁n₁(n))(A₂ + u₂n) − J²
        let first: Vec<Complex64> = n1
            .iter()
            .enumerate()
            .map(|(k, &c)| Complex64::new(p.u_1 * c, 0.0) + if k == 0 { a1 } else { ZERO })
            .collect();
        let mut q = poly_mul(&first, &[a2, Complex64::new(p.u_2, 0.0)]);
        q[0] -= j2;
        let qc: Vec<Complex64> = q.iter().map(|c| c.conj()).collect();
        let q2 = poly_mul(&q, &qc);
        // n|Q(n)|² − F²J² = 0
        let mut coeffs = vec![-f * f * j2];
        coeffs.extend(q2.iter().map(|c| c.re));
        for n in nonnegative_real_roots(&coeffs)? {
            let n1v = poly_eval(&n1, n).0;
            let pn = ((a1 + p.u_1 * n1v) * (a2 + p.u_2 * n) - j2) / j;
            if pn.norm() == 0.0 {
                continue;
            }
            let alpha_2 = -f / pn;
            let alpha_1 = (a2 + p.u_2 * n) * alpha_2 / j;
            candidates.push(GpState::new(alpha_1, alpha_2));
        }
    }

    let mut out: Vec<GpSolution> = Vec::new();
    for c in candidates {
        let s = newton_polish(c, p);
        let res = residual(&s, p);
        if !(res < RESIDUAL_TOL) || !s.is_finite() {
            continue;
        }
        if out.iter().any(|o| o.state.distance(&s) < DEDUP_DISTANCE) {
            continue;
        }
        let rates = bogoliubov_rates(&s, p)?;
        out.push(GpSolution {
            state: s,
            stability: classify_stability(&rates, StabilityTolerances::default()),
            bogoliubov_rates: rates,
            residual: res,
        });
    }
    out.sort_by(|a, b| a.state.n2().total_cmp(&b.state.n2()));
    Ok(out)
}

/// Jacobian of the flow in `(δα₁, δα₁*, δα₂, δα₂*)`.
pub fn linearize(s: &GpState, p: &GpParams) -> DenseMatrix {
    let (a1, a2) = p.a();
    let mut m = DenseMatrix::zeros(4, 4);
    let blocks = [(0, a1, p.u_1, s.alpha_1), (2, a2, p.u_2, s.alpha_2)];
    for (o, a, u, x) in blocks {
        let n = x.norm_sqr();
        m[(o, o)] = -I * (a + 2.0 * u * n);
        m[(o, o + 1)] = -I * u * x * x;
        m[(o + 1, o)] = I * u * (x * x).conj();
        m[(o + 1, o + 1)] = I * (a.conj() + 2.0 * u * n);
    }
    let hop = Complex64::new(0.0, p.j);
    m[(0, 2)] = hop;
    m[(2, 0)] = hop;
    m[(1, 3)] = -hop;
    m[(3, 1)] = -hop;
    m
}

pub fn bogoliubov_rates(s: &GpState, p: &GpParams) -> Result<[Complex64; 4]> {
    let ev = linearize(s, p).eigenvalues()?;
    let mut out = [ZERO; 4];
    out.copy_from_slice(&ev[..4]);
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityTolerances {
    /// Real parts above `−eps` count as unstable.
    pub eps: f64,
    /// Imaginary parts above this count as oscillating.
    pub eps_omega: f64,
}

impl Default for StabilityTolerances {
    fn default() -> Self {
        Self {
            eps: 1e-9,
            eps_omega: 1e-6,
        }
    }
}

pub fn classify_stability(rates: &[Complex64], tol: StabilityTolerances) -> Stability {
    let unstable: Vec<&Complex64> = rates.iter().filter(|l| l.re >= -tol.eps).collect();
    if unstable.is_empty() {
        Stability::Stable
    } else if unstable.iter().any(|l| l.im.abs() > tol.eps_omega) {
        Stability::ParametricallyUnstable
    } else {
        Stability::AmplitudeUnstable
    }
}

/// Phase-diagram category of a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    OneStable,
    OneParametric,
    ThreeNoP,
    ThreeWithP,
    Five,
    /// Anything else, with the raw solution count.
    Other(usize),
}

impl Region {
    pub fn from_solutions(sols: &[GpSolution]) -> Self {
        let any_p = sols
            .iter()
            .any(|s| s.stability == Stability::ParametricallyUnstable);
        match sols.len() {
            1 => match sols[0].stability {
                Stability::Stable => Region::OneStable,
                Stability::ParametricallyUnstable => Region::OneParametric,
                Stability::AmplitudeUnstable => Region::Other(1),
            },
            3 if any_p => Region::ThreeWithP,
            3 => Region::ThreeNoP,
            5 => Region::Five,
            n => Region::Other(n),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Region::OneStable => "1S".into(),
            Region::OneParametric => "1P".into(),
            Region::ThreeNoP => "3 (no P)".into(),
            Region::ThreeWithP => "3 (with P)".into(),
            Region::Five => "5".into(),
            Region::Other(n) => format!("other ({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramCell {
    pub j: f64,
    pub f_tilde: f64,
    pub delta: f64,
    pub n_solutions: usize,
    pub region: Region,
    pub stabilities: Vec<Stability>,
    pub error: Option<String>,
}

/// Evaluates `base` on every `(j, f̃)` pair; cells come back ordered with
/// `j` as the slow index.
pub fn scan_phase_diagram(base: &GpParams, j_values: &[f64], f_values: &[f64]) -> Result<Vec<PhaseDiagramCell>> {
    if j_values.len() < 2 || f_values.len() < 2 {
        return Err(DimerError::InsufficientData(
            "phase-diagram grids need at least two points per axis".into(),
        ));
    }
    let points: Vec<(f64, f64)> = j_values
        .iter()
        .flat_map(|&j| f_values.iter().map(move |&f| (j, f)))
        .collect();
    Ok(points
        .par_iter()
        .map(|&(j, f_tilde)| {
            let mut p = base.with_f_tilde(f_tilde);
            p.j = j;
            match find_steady_states(&p) {
                Ok(sols) => PhaseDiagramCell {
                    j,
                    f_tilde,
                    delta: p.delta_1,
                    n_solutions: sols.len(),
                    region: Region::from_solutions(&sols),
                    stabilities: sols.iter().map(|s| s.stability).collect(),
                    error: None,
                },
                Err(e) => PhaseDiagramCell {
                    j,
                    f_tilde,
                    delta: p.delta_1,
                    n_solutions: 0,
                    region: Region::Other(0),
                    stabilities: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Sampled mean-field trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GpState>,
    pub dt: f64,
}

pub fn rk4_gp_step(s: &GpState, p: &GpParams, h: f64) -> GpState {
    let k1 = gp_rhs(s, p);
    let k2 = gp_rhs(&s.axpy(0.5 * h, &k1), p);
    let k3 = gp_rhs(&s.axpy(0.5 * h, &k2), p);
    let k4 = gp_rhs(&s.axpy(h, &k3), p);
    GpState::new(
        s.alpha_1 + h / 6.0 * (k1.alpha_1 + 2.0 * k2.alpha_1 + 2.0 * k3.alpha_1 + k4.alpha_1),
        s.alpha_2 + h / 6.0 * (k1.alpha_2 + 2.0 * k2.alpha_2 + 2.0 * k3.alpha_2 + k4.alpha_2),
    )
}

/// RK4 integration keeping every `stride`-th state (and the final one).
pub fn integrate_gp(
    initial: GpState,
    p: &GpParams,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<GpTrajectory> {
    p.validate()?;
    check_positive("dt", dt)?;
    check_finite("t_final", t_final)?;
    let steps = (t_final / dt).round().max(0.0) as usize;
    let stride = stride.max(1);
    let mut s = initial;
    let mut times = vec![0.0];
    let mut states = vec![s];
    for k in 1..=steps {
        s = rk4_gp_step(&s, p, dt);
        if !s.is_finite() || s.alpha_1.norm() > BLOW_UP || s.alpha_2.norm() > BLOW_UP {
            return Err(DimerError::BlowUp { time: k as f64 * dt });
        }
        if k % stride == 0 || k == steps {
            times.push(k as f64 * dt);
            states.push(s);
        }
    }
    Ok(GpTrajectory { times, states, dt })
}

/// A detected periodic orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub period: f64,
    /// Time of the last section crossing used as the cycle origin.
    pub t0: f64,
    /// Field at `t0`, interpolated on the section.
    pub start: GpState,
    /// Successive section-to-section return times.
    pub intervals: Vec<f64>,
    /// `(max − min)/mean` over `intervals`.
    pub spread: f64,
}

/// Period of the late-time orbit of `traj` from the autocorrelation of
/// `Re α₁`, refined on the upward section through its mean.
pub fn limit_cycle_period(traj: &GpTrajectory, transient_cut: f64) -> Result<LimitCycle> {
    let start = traj.times.partition_point(|&t| t < transient_cut);
    let times = &traj.times[start..];
    let states = &traj.states[start..];
    if times.len() < 16 {
        return Err(DimerError::InsufficientData("trajectory too short after the transient".into()));
    }
    let x: Vec<f64> = states.iter().map(|s| s.alpha_1.re).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
    let scale = states.iter().map(|s| s.alpha_1.norm()).fold(0.0, f64::max);
    if var.sqrt() <= 1e-7 * (1.0 + scale) {
        return Err(DimerError::InsufficientData("no cycle: signal is constant".into()));
    }
    let h = times[1] - times[0];
    let lag = autocorrelation_peak(&x, mean).ok_or_else(|| {
        DimerError::InsufficientData("no cycle: autocorrelation has no clear peak".into())
    })?;
    let t_ac = lag as f64 * h;

    // Upward crossings of the mean, linearly interpolated.
    let mut crossings: Vec<(f64, usize)> = Vec::new();
    for k in 1..x.len() {
        if x[k - 1] < mean && x[k] >= mean {
            let frac = (mean - x[k - 1]) / (x[k] - x[k - 1]);
            crossings.push((times[k - 1] + frac * (times[k] - times[k - 1]), k - 1));
        }
    }
    // Keep the crossings one period apart, starting from the first.
    let mut chosen = Vec::new();
    if let Some(&first) = crossings.first() {
        chosen.push(first);
        let mut target = first.0 + t_ac;
        loop {
            let next = crossings
                .iter()
                .filter(|c| c.0 > chosen.last().unwrap().0 + 0.5 * t_ac)
                .min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs()));
            match next {
                Some(&c) if (c.0 - target).abs() < 0.25 * t_ac => {
                    chosen.push(c);
                    target = c.0 + t_ac;
                }
                _ => break,
            }
        }
    }
    if chosen.len() < 3 {
        return Err(DimerError::InsufficientData("no cycle: too few section crossings".into()));
    }
    let intervals: Vec<f64> = chosen.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let period = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let lo = intervals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = intervals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / period;
    if spread >= 0.01 {
        return Err(DimerError::InsufficientData(format!(
            "no cycle: return times spread by {:.2}%",
            100.0 * spread
        )));
    }
    let &(t0, k) = chosen.last().unwrap();
    let frac = (t0 - times[k]) / (times[k + 1] - times[k]);
    let lerp = |a: Complex64, b: Complex64| a + (b - a) * frac;
    let start_state = GpState::new(
        lerp(states[k].alpha_1, states[k + 1].alpha_1),
        lerp(states[k].alpha_2, states[k + 1].alpha_2),
    );
    Ok(LimitCycle {
        period,
        t0,
        start: start_state,
        intervals,
        spread,
    })
}

/// Lag of the first autocorrelation maximum after the first minimum,
/// provided it exceeds one half.
fn autocorrelation_peak(x: &[f64], mean: f64) -> Option<usize> {
    let n = x.len();
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|v| Complex64::new(v - mean, 0.0))
        .chain(std::iter::repeat(ZERO))
        .take(size)
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|v| *v = Complex64::new(v.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return None;
    }
    // Unbiased normalization keeps late lags comparable.
    let r: Vec<f64> = (0..n / 2)
        .map(|k| buf[k].re / c0 * n as f64 / (n - k) as f64)
        .collect();
    let mut k = 1;
    while k + 1 < r.len() && r[k + 1] <= r[k] {
        k += 1;
    }
    let mut best: Option<usize> = None;
    while k + 1 < r.len() {
        if r[k] > r[k - 1] && r[k] >= r[k + 1] && r[k] > 0.5 {
            best = Some(k);
            break;
        }
        k += 1;
    }
    best
}

/// `m` states spaced uniformly over one period, starting at the cycle
/// origin, integrated with steps no longer than `dt_max`.
pub fn sample_cycle(lc: &LimitCycle, p: &GpParams, m: usize, dt_max: f64) -> Result<Vec<GpState>> {
    check_positive("dt_max", dt_max)?;
    if m == 0 {
        return Err(DimerError::InsufficientData("need at least one cycle sample".into()));
    }
    let spacing = lc.period / m as f64;
    let sub = (spacing / dt_max).ceil().max(1.0) as usize;
    let h = spacing / sub as f64;
    let mut s = lc.start;
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        out.push(s);
        for _ in 0..sub {
            s = rk4_gp_step(&s, p, h);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(f_tilde: f64) -> GpParams {
        GpParams::symmetric(2.0, 1.2, 1.0, f_tilde)
    }

    #[test]
    fn vacuum_is_fixed_without_drive() {
        let d = gp_rhs(&GpState::vacuum(), &params(0.0));
        assert_eq!(d, GpState::vacuum());
        let sols = find_steady_states(&params(0.0)).unwrap();
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].stability, Stability::Stable);
        assert!(sols[0].state.distance(&GpState::vacuum()) < 1e-12);
    }

    #[test]
    fn linear_single_cavity_fixed_point() {
        let mut p = params(0.7);
        p.u_1 = 0.0;
        p.u_2 = 0.0;
        p.j = 0.0;
        let expected = p.f_eff / Complex64::new(2.0, 0.5);
        let s = GpState::new(expected, ZERO);
        assert!(residual(&s, &p) < 1e-14);
        let sols = find_steady_states(&p).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0].state.alpha_1 - expected).norm() < 1e-12);
    }

    #[test]
    fn reference_points() {
        let s = find_steady_states(&params(0.95)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].stability, Stability::Stable);
        let s = find_steady_states(&params(1.5)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].stability, Stability::ParametricallyUnstable);
    }

    #[test]
    fn empty_cavity_rates() {
        let r = bogoliubov_rates(&GpState::vacuum(), &params(0.0)).unwrap();
        for l in r {
            assert!((l.re + 0.5).abs() < 1e-12);
            let w = l.im.abs();
            assert!((w - 0.8).abs() < 1e-12 || (w - 3.2).abs() < 1e-12, "{l}");
        }
    }

    #[test]
    fn classification_rules() {
        let c = |v: &[(f64, f64)]| {
            let r: Vec<Complex64> = v.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
            classify_stability(&r, StabilityTolerances::default())
        };
        assert_eq!(c(&[(-0.5, 1.0); 4]), Stability::Stable);
        assert_eq!(
            c(&[(0.1, 0.0), (-0.3, 0.0), (-0.4, 0.0), (-0.5, 0.0)]),
            Stability::AmplitudeUnstable
        );
        assert_eq!(
            c(&[(0.05, 1.2), (0.05, -1.2), (-0.4, 1.2), (-0.4, -1.2)]),
            Stability::ParametricallyUnstable
        );
    }

    #[test]
    fn polynomial_roots_of_cubic() {
        let mut r = polynomial_roots(&[-6.0, 11.0, -6.0, 1.0]).unwrap();
        r.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (x, e) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - e).norm() < 1e-10);
        }
    }

    #[test]
    fn stable_point_is_reached() {
        let p = params(0.95);
        let fixed = find_steady_states(&p).unwrap()[0].state;
        let traj = integrate_gp(GpState::vacuum(), &p, 200.0, 1e-2, 1000).unwrap();
        assert!(traj.states.last().unwrap().distance(&fixed) < 1e-6);
        assert!(limit_cycle_period(&traj, 100.0).is_err());
    }

    #[test]
    fn sinusoid_period() {
        let period = 5.3;
        let times: Vec<f64> = (0..20000).map(|k| k as f64 * 0.01).collect();
        let states = times
            .iter()
            .map(|&t| GpState::new(Complex64::new((2.0 * std::f64::consts::PI * t / period).sin(), 0.0), ZERO))
            .collect();
        let traj = GpTrajectory { times, states, dt: 0.01 };
        let lc = limit_cycle_period(&traj, 10.0).unwrap();
        assert!((lc.period - period).abs() / period < 1e-3);
    }
}
