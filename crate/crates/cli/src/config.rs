//! Run configuration: parsing, unknown-key suggestions and validation.

use serde::{Deserialize, Serialize};

use dimer_core::model::{DimerParams, ModeCutoffs};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PhaseDiagram,
    GpEvolve,
    SteadyState,
    Spectrum,
    Twa,
    GapScaling,
    Observables,
    RhoAv,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::PhaseDiagram => "phase-diagram",
            Experiment::GpEvolve => "gp-evolve",
            Experiment::SteadyState => "steady-state",
            Experiment::Spectrum => "spectrum",
            Experiment::Twa => "twa",
            Experiment::GapScaling => "gap-scaling",
            Experiment::Observables => "observables",
            Experiment::RhoAv => "rho-av",
        }
    }
}

/// Physical parameters in units of κ. Give either `f_tilde` or `f`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub delta: Option<f64>,
    pub j: Option<f64>,
    pub kappa: Option<f64>,
    pub u: Option<f64>,
    pub f_tilde: Option<f64>,
    pub f: Option<f64>,
    pub delta_2: Option<f64>,
    pub u_2: Option<f64>,
    pub kappa_2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericBlock {
    pub n_max: Option<usize>,
    pub n_max_2: Option<usize>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub sample_stride: Option<usize>,
    pub noise: Option<bool>,
    /// Start of the fit window, or the transient cut for cycle detection.
    pub t_min: Option<f64>,
    pub fit_components: Option<usize>,
    pub snapshot_times: Option<Vec<f64>>,
    pub histogram_bins: Option<usize>,
    pub keep_trajectories: Option<usize>,
    pub write_density_matrix: Option<bool>,
}

/// Either explicit `values` or `start`, `stop` and `points`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

impl Axis {
    pub fn resolve(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let v = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => dimer_core::gp::linspace(a, b, n),
            _ => {
                return Err(CliError::validation(format!(
                    "axis `{name}` needs either `values` or all of `start`, `stop`, `points`"
                )))
            }
        };
        if v.len() < 2 {
            return Err(CliError::validation(format!("axis `{name}` needs at least two points")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::validation(format!("axis `{name}` has non-finite values")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub j: Axis,
    pub f_tilde: Axis,
    /// Extra detunings; defaults to `params.delta`.
    pub delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    FTilde,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObservable {
    N1,
    N2,
    UN1,
    UN2,
    EN,
    S,
    Lambda,
    Omega0,
}

impl SweepObservable {
    pub const ALL: [SweepObservable; 8] = [
        SweepObservable::N1,
        SweepObservable::N2,
        SweepObservable::UN1,
        SweepObservable::UN2,
        SweepObservable::EN,
        SweepObservable::S,
        SweepObservable::Lambda,
        SweepObservable::Omega0,
    ];

    pub fn column(&self) -> &'static str {
        match self {
            SweepObservable::N1 => "n1",
            SweepObservable::N2 => "n2",
            SweepObservable::UN1 => "u_n1",
            SweepObservable::UN2 => "u_n2",
            SweepObservable::EN => "e_n",
            SweepObservable::S => "s",
            SweepObservable::Lambda => "lambda",
            SweepObservable::Omega0 => "omega0",
        }
    }

    pub fn needs_spectrum(&self) -> bool {
        matches!(self, SweepObservable::Lambda | SweepObservable::Omega0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axis: SweepAxis,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
    pub observables: Option<Vec<SweepObservable>>,
}

impl SweepBlock {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        Axis { start: self.start, stop: self.stop, points: self.points, values: self.values.clone() }.resolve("sweep")
    }

    pub fn observables(&self) -> Vec<SweepObservable> {
        let mut v = self.observables.clone().unwrap_or_else(|| SweepObservable::ALL.to_vec());
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBlock {
    pub u_values: Vec<f64>,
    /// Per-U final times; defaults to `10/U` capped below by `numeric.t_final`.
    pub t_final: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub params: ParamsBlock,
    #[serde(default)]
    pub numeric: NumericBlock,
    pub grid: Option<GridBlock>,
    pub sweep: Option<SweepBlock>,
    pub scaling: Option<ScalingBlock>,
    pub workers: Option<usize>,
    pub output_dir: Option<String>,
}

/// Parse a configuration, turning unknown keys into suggestions.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str::<RunConfig>(text).map_err(|e| CliError::validation(describe_parse_error(&e)))
}

fn describe_parse_error(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for (marker, what) in [("unknown field `", "key"), ("unknown variant `", "value")] {
        if let Some(rest) = msg.split_once(marker).map(|(_, r)| r) {
            let Some((name, tail)) = rest.split_once('`') else { continue };
            let expected: Vec<&str> = tail.split('`').skip(1).step_by(2).collect();
            let hint = suggest(name, &expected)
                .map(|s| format!(" (did you mean `{s}`?)"))
                .unwrap_or_default();
            return format!("unknown {what} `{name}`{hint} at line {} column {}", e.line(), e.column());
        }
    }
    msg
}

/// Closest candidate ignoring case and underscores, else within edit
/// distance 3.
pub fn suggest<'a>(name: &str, candidates: &[&'a str]) -> Option<&'a str> {
    let norm = |s: &str| s.to_lowercase().replace(['_', '-'], "");
    let key = norm(name);
    if let Some(c) = candidates.iter().find(|c| norm(c) == key) {
        return Some(c);
    }
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(&key, &norm(c)), *c))
        .filter(|(d, _)| *d <= 3)
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::validation(format!("`{name}` must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::validation(format!("`{name}` must be finite")))
    }
}

fn required<T>(name: &str, v: Option<T>) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::validation(format!("missing required key `{name}`")))
}

impl RunConfig {
    pub fn kappa(&self) -> Result<f64, CliError> {
        positive("params.kappa", self.params.kappa.unwrap_or(1.0))
    }

    pub fn delta(&self) -> Result<f64, CliError> {
        finite("params.delta", required("params.delta", self.params.delta)?)
    }

    pub fn j(&self) -> Result<f64, CliError> {
        finite("params.j", required("params.j", self.params.j)?)
    }

    pub fn u(&self) -> Result<f64, CliError> {
        positive("params.u", required("params.u", self.params.u)?)
    }

    /// Rescaled drive, from `f_tilde` or from `f` and `u`.
    pub fn f_tilde(&self) -> Result<f64, CliError> {
        match (self.params.f_tilde, self.params.f) {
            (Some(ft), None) => finite("params.f_tilde", ft),
            (None, Some(f)) => Ok(finite("params.f", f)? * self.u()?.sqrt() / self.kappa()?.powf(1.5)),
            (Some(_), Some(_)) => Err(CliError::validation("give only one of `params.f_tilde` and `params.f`")),
            (None, None) => Err(CliError::validation("missing required key `params.f_tilde` (or `params.f`)")),
        }
    }

    /// Physical parameters at interaction `u` and rescaled drive `f_tilde`.
    pub fn dimer_at(&self, u: f64, f_tilde: f64) -> Result<DimerParams, CliError> {
        self.dimer_with(u, f_tilde, self.j()?)
    }

    /// As `dimer_at` with an explicit coupling, for grids over `j`.
    pub fn dimer_with(&self, u: f64, f_tilde: f64, j: f64) -> Result<DimerParams, CliError> {
        let kappa = self.kappa()?;
        let delta = self.delta()?;
        let ratio_u = self.params.u_2.map(|u2| u2 / self.params.u.unwrap_or(u)).unwrap_or(1.0);
        let p = DimerParams {
            delta_1: delta,
            delta_2: self.params.delta_2.unwrap_or(delta),
            u_1: u,
            u_2: u * ratio_u,
            kappa_1: kappa,
            kappa_2: self.params.kappa_2.unwrap_or(kappa),
            j,
            f: f_tilde * kappa.powf(1.5) / u.sqrt(),
        };
        p.validate().map_err(|e| CliError::validation(e.to_string()))?;
        Ok(p)
    }

    pub fn dimer(&self) -> Result<DimerParams, CliError> {
        self.dimer_at(self.u()?, self.f_tilde()?)
    }

    pub fn cutoffs(&self) -> Result<ModeCutoffs, CliError> {
        let n1 = required("numeric.n_max", self.numeric.n_max)?;
        let n2 = self.numeric.n_max_2.unwrap_or(n1);
        ModeCutoffs::new(n1, n2).map_err(|e| CliError::validation(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.numeric.seed.unwrap_or(0)
    }

    /// Check every field the experiment will read.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(CliError::validation("`workers` must be at least 1"));
            }
        }
        let n = &self.numeric;
        for (name, v) in [("numeric.dt", n.dt), ("numeric.t_final", n.t_final)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if let Some(t) = n.t_min {
            finite("numeric.t_min", t)?;
        }
        for (name, v) in [
            ("numeric.n_traj", n.n_traj),
            ("numeric.sample_stride", n.sample_stride),
            ("numeric.histogram_bins", n.histogram_bins),
            ("numeric.fit_components", n.fit_components),
        ] {
            if v == Some(0) {
                return Err(CliError::validation(format!("`{name}` must be at least 1")));
            }
        }
        if let Some(k) = n.k {
            if k < 2 {
                return Err(CliError::validation("`numeric.k` must be at least 2"));
            }
        }
        if self.sweep.is_some()
            && !matches!(
                self.experiment,
                Experiment::SteadyState | Experiment::Observables | Experiment::Spectrum | Experiment::RhoAv
            )
        {
            return Err(CliError::validation(format!(
                "experiment `{}` does not accept a `sweep` block",
                self.experiment.name()
            )));
        }
        let swept = self.sweep.as_ref().map(|s| s.axis);
        if let Some(s) = &self.sweep {
            s.values()?;
            if s.observables.as_ref().is_some_and(|o| o.is_empty()) {
                return Err(CliError::validation("`sweep.observables` is empty"));
            }
        }
        self.kappa()?;
        match self.experiment {
            Experiment::PhaseDiagram => {
                self.delta()?;
                let g = required("grid", self.grid.as_ref())?;
                g.j.resolve("grid.j")?;
                g.f_tilde.resolve("grid.f_tilde")?;
                if let Some(d) = &g.delta {
                    if d.is_empty() || d.iter().any(|x| !x.is_finite()) {
                        return Err(CliError::validation("`grid.delta` must be a nonempty list of finite values"));
                    }
                }
                self.dimer_with(1.0, 1.0, 1.0)?;
            }
            Experiment::GpEvolve => {
                self.f_tilde()?;
                self.mean_field_check(self.f_tilde()?)?;
            }
            Experiment::GapScaling => {
                let s = required("scaling", self.scaling.as_ref())?;
                if s.u_values.len() < 3 {
                    return Err(CliError::validation("`scaling.u_values` needs at least three values"));
                }
                for &u in &s.u_values {
                    positive("scaling.u_values", u)?;
                }
                if let Some(t) = &s.t_final {
                    if t.len() != s.u_values.len() {
                        return Err(CliError::validation("`scaling.t_final` must match `scaling.u_values` in length"));
                    }
                    for &v in t {
                        positive("scaling.t_final", v)?;
                    }
                }
                let lo = s.u_values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = s.u_values.iter().cloned().fold(0.0, f64::max);
                if hi / lo < 10f64.sqrt() {
                    return Err(CliError::validation("`scaling.u_values` must span at least half a decade"));
                }
                self.dimer_at(lo, self.f_tilde()?)?;
            }
            Experiment::RhoAv => {
                if swept != Some(SweepAxis::U) {
                    self.u()?;
                }
                if swept != Some(SweepAxis::FTilde) {
                    self.f_tilde()?;
                }
                self.mean_field_check(1.0)?;
            }
            Experiment::Twa => {
                self.dimer()?;
            }
            Experiment::SteadyState | Experiment::Observables | Experiment::Spectrum => {
                self.cutoffs()?;
                match swept {
                    Some(SweepAxis::U) => {
                        self.dimer_at(1.0, self.f_tilde()?)?;
                    }
                    Some(SweepAxis::FTilde) => {
                        self.dimer_at(self.u()?, 1.0)?;
                    }
                    None => {
                        self.dimer()?;
                    }
                }
            }
        }
        Ok(())
    }

    fn mean_field_check(&self, f_tilde: f64) -> Result<(), CliError> {
        self.dimer_at(1.0, f_tilde).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camel_case_key_gets_suggestion() {
        let err = parse_config(r#"{"experiment": "twa", "params": {"fTilde": 1.5}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("did you mean `f_tilde`"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn unknown_experiment_gets_suggestion() {
        let err = parse_config(r#"{"experiment": "spectra"}"#).unwrap_err();
        assert!(err.to_string().contains("did you mean `spectrum`"), "{err}");
    }

    #[test]
    fn drive_from_f_and_u() {
        let c = parse_config(r#"{"experiment": "twa", "params": {"delta": 2, "j": 1.2, "u": 0.25, "f": 3}}"#).unwrap();
        assert!((c.f_tilde().unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn empty_sweep_axis_is_rejected() {
        let c = parse_config(
            r#"{"experiment": "observables", "params": {"delta": 2, "j": 1.2, "u": 1, "f_tilde": 1},
                "numeric": {"n_max": 4}, "sweep": {"axis": "f_tilde", "values": []}}"#,
        )
        .unwrap();
        assert!(c.validate().is_err());
    }
}
