//! Truncated Wigner sampling of the dimer.
//!
//! Fields are in physical units (`⟨aᵢ⟩ ≈ αᵢ`). Each trajectory draws its
//! noise from a ChaCha8 stream selected by the trajectory index under a
//! key derived from the master seed, so any trajectory can be regenerated
//! alone and ensemble statistics do not depend on the thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DimerError, Result};
use crate::gp::GpParams;
use crate::model::DimerParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Fields beyond this magnitude mark a trajectory as diverged.
pub const TWA_BLOW_UP: f64 = 1e6;
/// Trajectories summed sequentially at the leaves of the reduction tree.
const LEAF: usize = 8;
const MOMENTS: usize = 13;

/// Stochastic integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    pub noise_enabled: bool,
    /// Steps between stored samples.
    pub sample_stride: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 100.0,
            n_traj: 1000,
            master_seed: 0,
            noise_enabled: true,
            sample_stride: 100,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DimerError::InvalidParameter { name: "dt", value: self.dt, reason: "must be positive" });
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(DimerError::InvalidParameter {
                name: "t_final",
                value: self.t_final,
                reason: "must be non-negative",
            });
        }
        if self.n_traj == 0 {
            return Err(DimerError::InvalidParameter { name: "n_traj", value: 0.0, reason: "must be at least 1" });
        }
        if self.sample_stride == 0 {
            return Err(DimerError::InvalidParameter {
                name: "sample_stride",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Sample times `k·stride·dt`, starting at zero.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.steps() / self.sample_stride + 1;
        (0..n).map(|k| (k * self.sample_stride) as f64 * self.dt).collect()
    }

    pub fn sample_spacing(&self) -> f64 {
        self.sample_stride as f64 * self.dt
    }
}

/// How the random stream of a trajectory is derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master_seed: u64,
    pub generator: String,
    pub stream: String,
    pub draw_order: String,
}

impl SeedRecord {
    fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            generator: "ChaCha8 keyed by seed_from_u64(master_seed)".into(),
            stream: "trajectory index".into(),
            draw_order: "initial Re a1, Im a1, Re a2, Im a2; then per step the same four".into(),
        }
    }
}

/// Fields of one trajectory at the sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFields {
    pub index: u64,
    pub times: Vec<f64>,
    pub fields: Vec<(Complex64, Complex64)>,
}

impl SampledFields {
    /// Per-trajectory `|α₁|² − |α₂|²`.
    pub fn population_difference(&self) -> Vec<f64> {
        self.fields.iter().map(|(a, b)| a.norm_sqr() - b.norm_sqr()).collect()
    }
}

struct Drift {
    a: [Complex64; 2],
    u: [f64; 2],
    j: f64,
    f: f64,
    sigma: [f64; 2],
}

impl Drift {
    fn new(p: &DimerParams, dt: f64) -> Self {
        Self {
            a: [
                Complex64::new(-p.delta_1, -0.5 * p.kappa_1),
                Complex64::new(-p.delta_2, -0.5 * p.kappa_2),
            ],
            u: [p.u_1, p.u_2],
            j: p.j,
            f: p.f,
            sigma: [(0.25 * p.kappa_1 * dt).sqrt(), (0.25 * p.kappa_2 * dt).sqrt()],
        }
    }

    #[inline]
    fn eval(&self, x1: Complex64, x2: Complex64) -> (Complex64, Complex64) {
        let d1 = -I * ((self.a[0] + self.u[0] * (x1.norm_sqr() - 1.0)) * x1 - self.j * x2 + self.f);
        let d2 = -I * ((self.a[1] + self.u[1] * (x2.norm_sqr() - 1.0)) * x2 - self.j * x1);
        (d1, d2)
    }
}

#[inline]
fn gaussian_pair(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(scale * re, scale * im)
}

fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Euler–Maruyama integration; `sink(k, α₁, α₂)` receives sample `k`.
fn run_trajectory(
    drift: &Drift,
    cfg: &SdeConfig,
    index: u64,
    mut sink: impl FnMut(usize, Complex64, Complex64),
) -> Result<()> {
    let mut rng = trajectory_rng(cfg.master_seed, index);
    let (mut x1, mut x2) = if cfg.noise_enabled {
        // Vacuum Wigner function: each quadrature has variance 1/4.
        (gaussian_pair(&mut rng, 0.5), gaussian_pair(&mut rng, 0.5))
    } else {
        (Complex64::default(), Complex64::default())
    };
    sink(0, x1, x2);
    let dt = cfg.dt;
    let stride = cfg.sample_stride;
    let steps = cfg.steps();
    let last = steps / stride * stride;
    for k in 1..=last {
        let (d1, d2) = drift.eval(x1, x2);
        x1 += d1 * dt;
        x2 += d2 * dt;
        if cfg.noise_enabled {
            x1 += gaussian_pair(&mut rng, drift.sigma[0]);
            x2 += gaussian_pair(&mut rng, drift.sigma[1]);
        }
        if k % stride == 0 {
            let bad = |x: Complex64| !(x.norm_sqr() <= TWA_BLOW_UP * TWA_BLOW_UP);
            if bad(x1) || bad(x2) {
                return Err(DimerError::BlowUp { time: k as f64 * dt });
            }
            sink(k / stride, x1, x2);
        }
    }
    Ok(())
}

/// One stochastic trajectory. A diverging trajectory returns `BlowUp`.
pub fn integrate_trajectory(params: &DimerParams, config: &SdeConfig, trajectory_index: u64) -> Result<SampledFields> {
    params.validate()?;
    config.validate()?;
    let drift = Drift::new(params, config.dt);
    let times = config.sample_times();
    let mut fields = vec![(Complex64::default(), Complex64::default()); times.len()];
    run_trajectory(&drift, config, trajectory_index, |k, a, b| fields[k] = (a, b))?;
    Ok(SampledFields { index: trajectory_index, times, fields })
}

/// Mean-field parameters that the noise-free fields follow after
/// rescaling by `√U₁`. The Wigner ordering shifts each detuning by `Uᵢ`.
pub fn mean_field_equivalent(params: &DimerParams) -> Result<GpParams> {
    let mut p = *params;
    p.delta_1 += p.u_1;
    p.delta_2 += p.u_2;
    GpParams::from_dimer(&p)
}

/// Extra output requested from an ensemble run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRequest {
    /// Times at which all fields are stored for histograms.
    pub snapshot_times: Vec<f64>,
    /// Trajectories with index below this are stored in full.
    pub keep_trajectories: usize,
}

/// All fields of the surviving trajectories at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub fields: Vec<(Complex64, Complex64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcludedTrajectory {
    pub index: u64,
    pub time: f64,
}

/// Reduced ensemble of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub params: DimerParams,
    pub config: SdeConfig,
    pub seeds: SeedRecord,
    pub times: Vec<f64>,
    /// Trajectories that contributed to the statistics.
    pub n_used: usize,
    pub excluded: Vec<ExcludedTrajectory>,
    pub kept: Vec<SampledFields>,
    pub snapshots: Vec<Snapshot>,
    sums: Vec<[f64; MOMENTS]>,
}

impl TrajectoryEnsemble {
    pub fn exclusion_rate(&self) -> f64 {
        self.excluded.len() as f64 / self.config.n_traj as f64
    }
}

struct Partial {
    sums: Vec<[f64; MOMENTS]>,
    used: usize,
    excluded: Vec<ExcludedTrajectory>,
    kept: Vec<SampledFields>,
    snaps: Vec<Vec<(Complex64, Complex64)>>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for m in 0..MOMENTS {
                a[m] += b[m];
            }
        }
        self.used += other.used;
        self.excluded.extend(other.excluded);
        self.kept.extend(other.kept);
        for (a, b) in self.snaps.iter_mut().zip(other.snaps) {
            a.extend(b);
        }
        self
    }
}

struct Job<'a> {
    drift: Drift,
    cfg: &'a SdeConfig,
    times: &'a [f64],
    snap_index: Vec<usize>,
    keep: usize,
}

fn moments(a: Complex64, b: Complex64) -> [f64; MOMENTS] {
    let n1 = a.norm_sqr();
    let n2 = b.norm_sqr();
    let z = n1 - n2;
    [
        a.re,
        a.im,
        b.re,
        b.im,
        a.re * a.re,
        a.im * a.im,
        b.re * b.re,
        b.im * b.im,
        n1,
        n2,
        n1 * n1,
        n2 * n2,
        z * z,
    ]
}

fn leaf(job: &Job, lo: usize, hi: usize) -> Partial {
    let ns = job.times.len();
    let mut out = Partial {
        sums: vec![[0.0; MOMENTS]; ns],
        used: 0,
        excluded: Vec::new(),
        kept: Vec::new(),
        snaps: vec![Vec::new(); job.snap_index.len()],
    };
    let mut buf = vec![(Complex64::default(), Complex64::default()); ns];
    for idx in lo..hi {
        let index = idx as u64;
        match run_trajectory(&job.drift, job.cfg, index, |k, a, b| buf[k] = (a, b)) {
            Ok(()) => {
                out.used += 1;
                for (acc, &(a, b)) in out.sums.iter_mut().zip(&buf) {
                    let m = moments(a, b);
                    for q in 0..MOMENTS {
                        acc[q] += m[q];
                    }
                }
                for (s, &k) in out.snaps.iter_mut().zip(&job.snap_index) {
                    s.push(buf[k]);
                }
                if idx < job.keep {
                    out.kept.push(SampledFields { index, times: job.times.to_vec(), fields: buf.clone() });
                }
            }
            Err(DimerError::BlowUp { time }) => out.excluded.push(ExcludedTrajectory { index, time }),
            Err(_) => unreachable!("trajectory integration only fails by blow-up"),
        }
    }
    out
}

fn reduce(job: &Job, lo: usize, hi: usize) -> Partial {
    if hi - lo <= LEAF {
        return leaf(job, lo, hi);
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(|| reduce(job, lo, mid), || reduce(job, mid, hi));
    a.merge(b)
}

/// Integrate `config.n_traj` trajectories on the current rayon pool.
pub fn run_ensemble(params: &DimerParams, config: &SdeConfig, request: &EnsembleRequest) -> Result<TrajectoryEnsemble> {
    params.validate()?;
    config.validate()?;
    let times = config.sample_times();
    let h = config.sample_spacing();
    let mut snap_index = Vec::with_capacity(request.snapshot_times.len());
    for &t in &request.snapshot_times {
        let k = (t / h).round();
        if !(k >= 0.0 && (k as usize) < times.len()) {
            return Err(DimerError::InvalidParameter {
                name: "snapshot_time",
                value: t,
                reason: "outside the sampled range",
            });
        }
        snap_index.push(k as usize);
    }
    let job = Job {
        drift: Drift::new(params, config.dt),
        cfg: config,
        times: &times,
        snap_index,
        keep: request.keep_trajectories,
    };
    let part = reduce(&job, 0, config.n_traj);
    let snapshots = part
        .snaps
        .into_iter()
        .zip(&job.snap_index)
        .map(|(fields, &k)| Snapshot { time: times[k], fields })
        .collect();
    Ok(TrajectoryEnsemble {
        params: *params,
        config: *config,
        seeds: SeedRecord::new(config.master_seed),
        n_used: part.used,
        excluded: part.excluded,
        kept: part.kept,
        snapshots,
        sums: part.sums,
        times,
    })
}

/// Ensemble observables with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub z: Vec<f64>,
    pub n1_err: Vec<f64>,
    pub n2_err: Vec<f64>,
    pub z_err: Vec<f64>,
    pub alpha1: Vec<Complex64>,
    pub alpha2: Vec<Complex64>,
    /// Standard errors of the real and imaginary parts.
    pub alpha1_err: Vec<Complex64>,
    pub alpha2_err: Vec<Complex64>,
    pub n_samples: usize,
}

impl EnsembleSeries {
    /// The same series with the mode labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            times: self.times.clone(),
            n1: self.n2.clone(),
            n2: self.n1.clone(),
            z: self.z.iter().map(|v| -v).collect(),
            n1_err: self.n2_err.clone(),
            n2_err: self.n1_err.clone(),
            z_err: self.z_err.clone(),
            alpha1: self.alpha2.clone(),
            alpha2: self.alpha1.clone(),
            alpha1_err: self.alpha2_err.clone(),
            alpha2_err: self.alpha1_err.clone(),
            n_samples: self.n_samples,
        }
    }
}

/// Photon numbers `⟨|αᵢ|²⟩ − ½`, population difference and mean fields.
pub fn ensemble_observables(ensemble: &TrajectoryEnsemble) -> Result<EnsembleSeries> {
    let n = ensemble.n_used;
    if n == 0 {
        return Err(DimerError::InsufficientData("every trajectory was excluded".into()));
    }
    let inv = 1.0 / n as f64;
    let se = |mean: f64, sq: f64| {
        if n < 2 {
            return 0.0;
        }
        let var = (sq * inv - mean * mean).max(0.0) * n as f64 / (n - 1) as f64;
        (var * inv).sqrt()
    };
    let len = ensemble.times.len();
    let mut s = EnsembleSeries {
        times: ensemble.times.clone(),
        n1: Vec::with_capacity(len),
        n2: Vec::with_capacity(len),
        z: Vec::with_capacity(len),
        n1_err: Vec::with_capacity(len),
        n2_err: Vec::with_capacity(len),
        z_err: Vec::with_capacity(len),
        alpha1: Vec::with_capacity(len),
        alpha2: Vec::with_capacity(len),
        alpha1_err: Vec::with_capacity(len),
        alpha2_err: Vec::with_capacity(len),
        n_samples: n,
    };
    for m in &ensemble.sums {
        let mean = |q: usize| m[q] * inv;
        let (m1, m2) = (mean(8), mean(9));
        s.n1.push(m1 - 0.5);
        s.n2.push(m2 - 0.5);
        s.z.push(m1 - m2);
        s.n1_err.push(se(m1, m[10]));
        s.n2_err.push(se(m2, m[11]));
        s.z_err.push(se(m1 - m2, m[12]));
        s.alpha1.push(Complex64::new(mean(0), mean(1)));
        s.alpha2.push(Complex64::new(mean(2), mean(3)));
        s.alpha1_err.push(Complex64::new(se(mean(0), m[4]), se(mean(1), m[5])));
        s.alpha2_err.push(Complex64::new(se(mean(2), m[6]), se(mean(3), m[7])));
    }
    Ok(s)
}

/// 2D counts over `(Re α, Im α)` for both modes on shared square bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceHistogram {
    pub time: f64,
    pub bins: usize,
    /// `bins + 1` edges, used for both axes.
    pub edges: Vec<f64>,
    /// Row-major `[re_bin * bins + im_bin]`, one table per mode.
    pub counts: [Vec<u64>; 2],
    /// Samples falling outside the edges, per mode.
    pub outside: [u64; 2],
}

impl PhaseSpaceHistogram {
    pub fn total(&self, mode: usize) -> u64 {
        self.counts[mode].iter().sum::<u64>() + self.outside[mode]
    }
}

/// Histogram of the snapshot taken at `t`. Without an `extent` the edges
/// span the largest quadrature seen, so nothing falls outside.
pub fn phase_space_histogram(
    ensemble: &TrajectoryEnsemble,
    t: f64,
    bins: usize,
    extent: Option<f64>,
) -> Result<PhaseSpaceHistogram> {
    if ensemble.n_used == 0 {
        return Err(DimerError::InsufficientData("empty ensemble".into()));
    }
    if bins == 0 {
        return Err(DimerError::InvalidParameter { name: "bins", value: 0.0, reason: "must be at least 1" });
    }
    let h = ensemble.config.sample_spacing();
    let snap = ensemble
        .snapshots
        .iter()
        .find(|s| (s.time - t).abs() <= 0.5 * h)
        .ok_or(DimerError::InvalidParameter {
            name: "t",
            value: t,
            reason: "no snapshot was stored at this time",
        })?;
    let r = match extent {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(DimerError::InvalidParameter { name: "extent", value: r, reason: "must be positive" }),
        None => {
            let m = snap
                .fields
                .iter()
                .flat_map(|(a, b)| [a.re.abs(), a.im.abs(), b.re.abs(), b.im.abs()])
                .fold(0.0, f64::max);
            if m > 0.0 {
                m * (1.0 + 1e-9)
            } else {
                1.0
            }
        }
    };
    let edges: Vec<f64> = (0..=bins).map(|k| -r + 2.0 * r * k as f64 / bins as f64).collect();
    let mut counts = [vec![0u64; bins * bins], vec![0u64; bins * bins]];
    let mut outside = [0u64; 2];
    let locate = |x: f64| {
        let k = ((x + r) / (2.0 * r) * bins as f64).floor();
        if k >= 0.0 && (k as usize) < bins {
            Some(k as usize)
        } else {
            None
        }
    };
    for &(a, b) in &snap.fields {
        for (mode, x) in [a, b].into_iter().enumerate() {
            match (locate(x.re), locate(x.im)) {
                (Some(i), Some(j)) => counts[mode][i * bins + j] += 1,
                _ => outside[mode] += 1,
            }
        }
    }
    Ok(PhaseSpaceHistogram { time: snap.time, bins, edges, counts, outside })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{integrate_gp, GpState};

    fn linear(delta: f64, f: f64) -> DimerParams {
        DimerParams::symmetric(delta, 0.0, 1.0, 0.0, f)
    }

    #[test]
    fn trajectory_is_reproducible() {
        let p = DimerParams::symmetric(2.0, 0.1, 1.0, 1.2, 1.5 / 0.1f64.sqrt());
        let cfg = SdeConfig { t_final: 2.0, n_traj: 4, sample_stride: 50, ..Default::default() };
        let a = integrate_trajectory(&p, &cfg, 3).unwrap();
        let b = integrate_trajectory(&p, &cfg, 3).unwrap();
        let c = integrate_trajectory(&p, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.fields, c.fields);
        assert_eq!(a.times.len(), 41);
    }

    #[test]
    fn noise_off_follows_shifted_mean_field() {
        let u = 0.1;
        let p = DimerParams::symmetric(2.0, u, 1.0, 1.2, 1.5 / u.sqrt());
        let cfg = SdeConfig { dt: 1e-4, t_final: 5.0, noise_enabled: false, sample_stride: 1000, ..Default::default() };
        let twa = integrate_trajectory(&p, &cfg, 0).unwrap();
        let gp = integrate_gp(GpState::vacuum(), &mean_field_equivalent(&p).unwrap(), 5.0, 1e-3, 100).unwrap();
        for (k, (a, _)) in twa.fields.iter().enumerate() {
            let g = gp.states[k].unscaled(u).0;
            assert!((a - g).norm() < 5e-3 * (1.0 + g.norm()), "t={} {a} {g}", twa.times[k]);
        }
    }

    #[test]
    fn vacuum_ensemble_has_no_photons() {
        let cfg = SdeConfig { t_final: 0.0, n_traj: 4000, master_seed: 11, ..Default::default() };
        let ens = run_ensemble(&linear(0.0, 0.0), &cfg, &EnsembleRequest::default()).unwrap();
        let s = ensemble_observables(&ens).unwrap();
        assert!(s.n1[0].abs() < 3.0 * s.n1_err[0]);
        assert!(s.n2[0].abs() < 3.0 * s.n2_err[0]);
        let w = s.swapped();
        assert_eq!(w.z[0], -s.z[0]);
        assert_eq!(w.n1, s.n2);
    }

    #[test]
    fn reduction_is_independent_of_threads() {
        let p = DimerParams::symmetric(2.0, 0.2, 1.0, 1.2, 1.5 / 0.2f64.sqrt());
        let cfg = SdeConfig { t_final: 1.0, n_traj: 37, master_seed: 5, sample_stride: 100, ..Default::default() };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_ensemble(&p, &cfg, &EnsembleRequest { snapshot_times: vec![0.5], keep_trajectories: 2 }))
                .unwrap()
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.kept.len(), 2);
        assert_eq!(a.snapshots[0].fields.len(), 37);
    }

    #[test]
    fn histogram_counts_every_trajectory() {
        let cfg = SdeConfig { t_final: 0.0, n_traj: 500, ..Default::default() };
        let req = EnsembleRequest { snapshot_times: vec![0.0], keep_trajectories: 0 };
        let ens = run_ensemble(&linear(0.0, 0.0), &cfg, &req).unwrap();
        let h = phase_space_histogram(&ens, 0.0, 16, None).unwrap();
        assert_eq!(h.total(0), 500);
        assert_eq!(h.outside, [0, 0]);
        assert!(phase_space_histogram(&ens, 1.0, 16, None).is_err());
    }

    #[test]
    fn blow_up_is_excluded() {
        // Negative loss is rejected, so force divergence with a huge Kerr term.
        let p = DimerParams::symmetric(0.0, 1e9, 1.0, 0.0, 1e4);
        let cfg = SdeConfig { dt: 1e-2, t_final: 1.0, n_traj: 3, sample_stride: 1, ..Default::default() };
        let ens = run_ensemble(&p, &cfg, &EnsembleRequest::default()).unwrap();
        assert_eq!(ens.excluded.len(), 3);
        assert!(ensemble_observables(&ens).is_err());
    }
}
