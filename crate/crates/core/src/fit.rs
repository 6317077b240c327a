//! Damped-sinusoid fits of population-difference traces and power-law
//! scaling of the fitted decay rate.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{DimerError, Result};
use crate::model::DimerParams;
use crate::twa::{ensemble_observables, run_ensemble, EnsembleRequest, SdeConfig};

/// Fit settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Largest number of sinusoids.
    pub max_components: usize,
    /// Peaks below this fraction of the spectral maximum are ignored.
    pub peak_threshold: f64,
    /// Peaks must also exceed this multiple of the median spectral level.
    pub noise_floor_factor: f64,
    /// Accepted peaks are at least this fraction of the dominant
    /// frequency apart.
    pub min_separation: f64,
    /// Components whose energy is below this multiple of the residual
    /// variance are dropped and the fit repeated.
    pub min_snr: f64,
    /// Relative tolerance of the integer-multiple test.
    pub multiple_tolerance: f64,
    pub max_iterations: usize,
    /// Samples after this time are ignored.
    pub t_max: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_components: 3,
            peak_threshold: 0.05,
            noise_floor_factor: 5.0,
            min_separation: 0.25,
            min_snr: 30.0,
            multiple_tolerance: 0.03,
            max_iterations: 200,
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    GaussNewton,
    LogEnvelope,
}

/// `z(t) ≈ offset + Σₖ Aₖ e^{−Λ(t−t_ref)} sin(ωₖ(t−t_ref) + φₖ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampedOscillationFit {
    pub lambda_gap: f64,
    /// Sorted ascending.
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub offset: f64,
    pub t_ref: f64,
    pub omega0: f64,
    /// `ωₖ/ω₀`.
    pub ratios: Vec<f64>,
    pub integer_multiples: bool,
    /// Root-mean-square residual.
    pub residual: f64,
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitOutcome {
    Oscillating(DampedOscillationFit),
    NoOscillation { reason: String },
}

impl FitOutcome {
    pub fn oscillating(&self) -> Option<&DampedOscillationFit> {
        match self {
            FitOutcome::Oscillating(f) => Some(f),
            FitOutcome::NoOscillation { .. } => None,
        }
    }
}

/// Fit the samples with `t ≥ t_min` (uniformly spaced).
pub fn fit_damped_oscillations(times: &[f64], z: &[f64], t_min: f64, opts: &FitOptions) -> Result<FitOutcome> {
    if times.len() != z.len() {
        return Err(DimerError::DimensionMismatch { expected: times.len(), found: z.len() });
    }
    let start = times.partition_point(|&t| t < t_min);
    let end = match opts.t_max {
        Some(t_max) => times.partition_point(|&t| t <= t_max),
        None => times.len(),
    };
    let t = &times[start..end.max(start)];
    let y = &z[start..end.max(start)];
    if t.len() < 32 {
        return Err(DimerError::InsufficientData("fewer than 32 samples in the fit window".into()));
    }
    let h = t[1] - t[0];
    let span = t[t.len() - 1] - t[0];
    if !(h > 0.0) || ((span / (t.len() - 1) as f64) - h).abs() > 1e-6 * h {
        return Err(DimerError::InsufficientData("samples are not uniformly spaced".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DimerError::InsufficientData("series contains non-finite values".into()));
    }
    let t_ref = t[0];
    let tt: Vec<f64> = t.iter().map(|v| v - t_ref).collect();

    // Strongest first.
    let mut peaks = spectral_peaks(y, h, opts);
    if peaks.is_empty() {
        return Ok(FitOutcome::NoOscillation { reason: "no spectral peak above the noise floor".into() });
    }
    let period = std::f64::consts::TAU / peaks[0];
    if span < 5.0 * period {
        return Err(DimerError::InsufficientData(format!(
            "fit window spans {:.3} but five periods need {:.3}",
            span,
            5.0 * period
        )));
    }
    let bin = std::f64::consts::TAU / span;
    // Slow secondary peaks cannot be resolved from drift.
    peaks.retain(|&w| w >= 5.0 * bin);
    loop {
        let mut freqs = peaks.clone();
        freqs.sort_by(f64::total_cmp);
        let Some(p) = gauss_newton(&tt, y, &freqs, opts).filter(|p| accept(p, &freqs, bin)) else {
            if peaks.len() > 1 {
                peaks.pop();
                continue;
            }
            let w = peaks[0];
            let l = log_envelope(&tt, y, w).max(0.0);
            let Some(lin) = linear_part(&tt, y, l, &peaks) else {
                return Err(DimerError::NotConverged { what: "damped-oscillation fit", residual: f64::NAN });
            };
            let p = vec![lin[0], l, lin[1], lin[2], w];
            return Ok(FitOutcome::Oscillating(summarize(&tt, y, &p, t_ref, FitMethod::LogEnvelope, opts)));
        };
        match weakest_insignificant(&tt, y, &p, opts.min_snr) {
            Some(k) => {
                let drop = freqs[k];
                peaks.retain(|&w| w != drop);
                if peaks.is_empty() {
                    return Ok(FitOutcome::NoOscillation { reason: "no component rises above the residual".into() });
                }
            }
            None => return Ok(FitOutcome::Oscillating(summarize(&tt, y, &p, t_ref, FitMethod::GaussNewton, opts))),
        }
    }
}

/// Index of the least energetic component if it is not significant.
fn weakest_insignificant(t: &[f64], y: &[f64], p: &[f64], min_snr: f64) -> Option<usize> {
    let var = ssr(t, y, p) / (t.len() as f64 - p.len() as f64).max(1.0);
    let decay: f64 = t.iter().map(|&t| (-2.0 * p[1] * t).exp()).sum();
    let (k, e) = p[2..]
        .chunks(3)
        .map(|c| 0.5 * (c[0] * c[0] + c[1] * c[1]) * decay)
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (e < min_snr * var).then_some(k)
}

fn spectral_peaks(y: &[f64], h: f64, opts: &FitOptions) -> Vec<f64> {
    let n = y.len();
    // Remove the least-squares line.
    let xm = (n - 1) as f64 / 2.0;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = y.iter().enumerate().map(|(k, v)| (k as f64 - xm) * (v - ym)).sum();
    let sxx: f64 = (0..n).map(|k| (k as f64 - xm).powi(2)).sum();
    let slope = sxy / sxx;
    let pad = 8;
    let size = (n * pad).next_power_of_two();
    let res = size as f64 / n as f64;
    let mut buf: Vec<Complex64> = (0..size)
        .map(|k| {
            if k < n {
                let w = 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (n - 1) as f64).cos();
                Complex64::new(w * (y[k] - ym - slope * (k as f64 - xm)), 0.0)
            } else {
                Complex64::default()
            }
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(size).process(&mut buf);
    let mag: Vec<f64> = buf[..size / 2].iter().map(|c| c.norm()).collect();
    let global = mag.iter().cloned().fold(0.0, f64::max);
    if global <= 0.0 {
        return Vec::new();
    }
    let mut sorted = mag.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = opts.noise_floor_factor * sorted[sorted.len() / 2];
    let reach = res.ceil() as usize;
    let lowest = (2.0 * res).ceil() as usize;
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for k in lowest.max(1)..mag.len().saturating_sub(reach) {
        let m = mag[k];
        if m < opts.peak_threshold * global || m < floor {
            continue;
        }
        let lo = k.saturating_sub(reach);
        if (lo..=k + reach).all(|q| q == k || mag[q] < m) {
            peaks.push((k, m));
        }
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let dw = std::f64::consts::TAU / (size as f64 * h);
    let refine = |k: usize| {
        let (a, b, c) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
        let den = a - 2.0 * b + c;
        let shift = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        (k as f64 + shift.clamp(-0.5, 0.5)) * dw
    };
    let mut out: Vec<f64> = Vec::new();
    for (k, _) in peaks {
        let w = refine(k);
        let gap = opts.min_separation * out.first().copied().unwrap_or(w);
        if out.iter().all(|v| (v - w).abs() >= gap) {
            out.push(w);
        }
        if out.len() == opts.max_components.max(1) {
            break;
        }
    }
    out
}

/// Linear coefficients `[c, a₁, b₁, …]` of
/// `c + e^{−Λt} Σ (aₖ sin ωₖt + bₖ cos ωₖt)`.
fn linear_part(t: &[f64], y: &[f64], lambda: f64, freqs: &[f64]) -> Option<Vec<f64>> {
    let cols = 1 + 2 * freqs.len();
    let a = Mat::<f64>::from_fn(t.len(), cols, |r, c| {
        if c == 0 {
            return 1.0;
        }
        let k = (c - 1) / 2;
        let e = (-lambda * t[r]).exp();
        if (c - 1) % 2 == 0 {
            e * (freqs[k] * t[r]).sin()
        } else {
            e * (freqs[k] * t[r]).cos()
        }
    });
    let b = Mat::<f64>::from_fn(t.len(), 1, |r, _| y[r]);
    let x = a.qr().solve_lstsq(&b);
    let v: Vec<f64> = (0..cols).map(|k| x[(k, 0)]).collect();
    v.iter().all(|q| q.is_finite()).then_some(v)
}

fn model(t: f64, p: &[f64]) -> f64 {
    let e = (-p[1] * t).exp();
    let mut s = 0.0;
    for c in p[2..].chunks(3) {
        let (sn, cs) = (c[2] * t).sin_cos();
        s += c[0] * sn + c[1] * cs;
    }
    p[0] + e * s
}

fn ssr(t: &[f64], y: &[f64], p: &[f64]) -> f64 {
    t.iter().zip(y).map(|(&t, &y)| (y - model(t, p)).powi(2)).sum()
}

fn scan_lambda(t: &[f64], y: &[f64], freqs: &[f64]) -> f64 {
    let w_min = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut best = (f64::INFINITY, 0.0);
    let grid = std::iter::once(0.0).chain((0..80).map(|k| 1e-5 * w_min * 10f64.powf(k as f64 / 16.0)));
    for l in grid {
        if let Some(lin) = linear_part(t, y, l, freqs) {
            let mut p = vec![lin[0], l];
            for (k, w) in freqs.iter().enumerate() {
                p.extend([lin[1 + 2 * k], lin[2 + 2 * k], *w]);
            }
            let r = ssr(t, y, &p);
            if r < best.0 {
                best = (r, l);
            }
        }
    }
    best.1
}

fn gauss_newton(t: &[f64], y: &[f64], freqs: &[f64], opts: &FitOptions) -> Option<Vec<f64>> {
    let lambda0 = scan_lambda(t, y, freqs);
    let lin = linear_part(t, y, lambda0, freqs)?;
    let mut p = vec![lin[0], lambda0];
    for (k, w) in freqs.iter().enumerate() {
        p.extend([lin[1 + 2 * k], lin[2 + 2 * k], *w]);
    }
    let np = p.len();
    let mut cost = ssr(t, y, &p);
    for _ in 0..opts.max_iterations {
        let jac = Mat::<f64>::from_fn(t.len(), np, |r, c| {
            let tr = t[r];
            let e = (-p[1] * tr).exp();
            match c {
                0 => 1.0,
                1 => {
                    let mut s = 0.0;
                    for q in p[2..].chunks(3) {
                        let (sn, cs) = (q[2] * tr).sin_cos();
                        s += q[0] * sn + q[1] * cs;
                    }
                    -tr * e * s
                }
                _ => {
                    let k = (c - 2) / 3;
                    let q = &p[2 + 3 * k..5 + 3 * k];
                    let (sn, cs) = (q[2] * tr).sin_cos();
                    match (c - 2) % 3 {
                        0 => e * sn,
                        1 => e * cs,
                        _ => e * tr * (q[0] * cs - q[1] * sn),
                    }
                }
            }
        });
        let rhs = Mat::<f64>::from_fn(t.len(), 1, |r, _| y[r] - model(t[r], &p));
        let step = jac.qr().solve_lstsq(&rhs);
        if (0..np).any(|k| !step[(k, 0)].is_finite()) {
            return None;
        }
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..np).map(|k| p[k] + scale * step[(k, 0)]).collect();
            let c = ssr(t, y, &trial);
            if c.is_finite() && c <= cost {
                let done = cost - c <= 1e-14 * cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = c;
                improved = !done;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some(p)
}

/// Reject fits whose frequencies left their spectral bin or merged.
fn accept(p: &[f64], freqs: &[f64], bin: f64) -> bool {
    if !(p.iter().all(|v| v.is_finite()) && p[1] >= 0.0) {
        return false;
    }
    let fitted: Vec<f64> = p[2..].chunks(3).map(|c| c[2]).collect();
    let stayed = fitted.iter().zip(freqs).all(|(a, b)| *a > 0.0 && (a - b).abs() < bin);
    let apart = fitted.windows(2).all(|w| w[1] - w[0] > 0.5 * bin);
    stayed && apart
}

/// Decay rate from a line through the logs of the per-cycle maxima of
/// `|y − mean|`.
fn log_envelope(t: &[f64], y: &[f64], w_min: f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let h = t[1] - t[0];
    let win = ((std::f64::consts::TAU / w_min) / h).ceil().max(1.0) as usize;
    let pts: Vec<(f64, f64)> = y
        .chunks(win)
        .enumerate()
        .filter_map(|(c, ch)| {
            let (k, m) = ch
                .iter()
                .enumerate()
                .map(|(k, v)| (k, (v - mean).abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))?;
            (m > 0.0).then(|| (t[c * win + k], m.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    -sxy / sxx
}

fn summarize(t: &[f64], y: &[f64], p: &[f64], t_ref: f64, method: FitMethod, opts: &FitOptions) -> DampedOscillationFit {
    let mut comps: Vec<(f64, f64, f64)> = p[2..]
        .chunks(3)
        .map(|c| (c[2], c[0].hypot(c[1]), c[1].atan2(c[0])))
        .collect();
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let omega0 = comps[0].0;
    let ratios: Vec<f64> = comps.iter().map(|c| c.0 / omega0).collect();
    let integer_multiples = ratios.iter().all(|r| {
        let m = r.round().max(1.0);
        (r - m).abs() <= opts.multiple_tolerance * m
    });
    DampedOscillationFit {
        lambda_gap: p[1],
        frequencies: comps.iter().map(|c| c.0).collect(),
        amplitudes: comps.iter().map(|c| c.1).collect(),
        phases: comps.iter().map(|c| c.2).collect(),
        offset: p[0],
        t_ref,
        omega0,
        ratios,
        integer_multiples,
        residual: (ssr(t, y, p) / t.len() as f64).sqrt(),
        method,
    }
}

/// `y = c·x^η` fitted on logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub eta: f64,
    /// Standard error of the slope.
    pub eta_err: f64,
    pub prefactor: f64,
    pub points: usize,
}

pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<PowerLaw> {
    if x.len() != y.len() {
        return Err(DimerError::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 3 {
        return Err(DimerError::InsufficientData("a power law needs at least three points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(DimerError::InsufficientData("power-law data must be positive".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let xm = lx.iter().sum::<f64>() / n;
    let ym = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let eta = sxy / sxx;
    let icpt = ym - eta * xm;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - icpt - eta * a).powi(2)).sum();
    let eta_err = (rss / (n - 2.0) / sxx).sqrt();
    Ok(PowerLaw { eta, eta_err, prefactor: icpt.exp(), points: x.len() })
}

/// One interaction strength of a gap-scaling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub u: f64,
    pub config: SdeConfig,
    pub t_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScalingPoint {
    pub u: f64,
    pub fit: Option<DampedOscillationFit>,
    pub excluded_trajectories: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScaling {
    pub points: Vec<GapScalingPoint>,
    pub law: PowerLaw,
}

/// Ensemble fit at each point along the scaling family of `base` (its
/// interactions and drive are replaced at fixed `F̃`). Failed fits are
/// kept with a warning.
pub fn gap_scaling_points(
    base: &DimerParams,
    f_tilde: f64,
    points: &[GapPoint],
    opts: &FitOptions,
) -> Result<Vec<GapScalingPoint>> {
    let us: Vec<f64> = points.iter().map(|p| p.u).collect();
    let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = us.iter().cloned().fold(0.0, f64::max);
    if us.len() < 3 || !(lo > 0.0) || hi / lo < 10f64.sqrt() {
        return Err(DimerError::InsufficientData(
            "gap scaling needs three or more positive U spanning half a decade".into(),
        ));
    }
    let mut out = Vec::with_capacity(points.len());
    for gp in points {
        let mut p = *base;
        let ratio = p.u_2 / p.u_1;
        p.u_1 = gp.u;
        p.u_2 = gp.u * ratio;
        p.f = f_tilde * p.kappa_1.powf(1.5) / gp.u.sqrt();
        let ens = run_ensemble(&p, &gp.config, &EnsembleRequest::default())?;
        let mut point = GapScalingPoint {
            u: gp.u,
            fit: None,
            excluded_trajectories: ens.excluded.len(),
            warning: None,
        };
        match ensemble_observables(&ens).and_then(|s| fit_damped_oscillations(&s.times, &s.z, gp.t_min, opts)) {
            Ok(FitOutcome::Oscillating(f)) if f.lambda_gap > 0.0 => point.fit = Some(f),
            Ok(FitOutcome::Oscillating(_)) => point.warning = Some("fitted decay rate is zero".into()),
            Ok(FitOutcome::NoOscillation { reason }) => point.warning = Some(reason),
            Err(e) => point.warning = Some(e.to_string()),
        }
        out.push(point);
    }
    Ok(out)
}

/// Power law through the points that produced a fit.
pub fn scaling_law(points: &[GapScalingPoint]) -> Result<PowerLaw> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.fit.as_ref().map(|f| (p.u, f.lambda_gap)))
        .unzip();
    power_law_fit(&x, &y)
}

/// Exponent of `Λ ∝ U^η` from ensemble fits; fewer than three surviving
/// points is an error.
pub fn gap_scaling(base: &DimerParams, f_tilde: f64, points: &[GapPoint], opts: &FitOptions) -> Result<GapScaling> {
    let points = gap_scaling_points(base, f_tilde, points, opts)?;
    let law = scaling_law(&points)?;
    Ok(GapScaling { points, law })
}
