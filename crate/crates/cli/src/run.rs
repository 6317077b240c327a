//! Experiment execution.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use dimer_core::fit::{self, FitOptions, GapPoint};
use dimer_core::gp::{self, GpParams, GpState};
use dimer_core::model::DimerParams;
use dimer_core::observables::{self, CoherentMixture, ObservableReport};
use dimer_core::spectrum::{dimer_spectrum, SpectrumOptions, SpectrumResult};
use dimer_core::steady::{dimer_steady_state, DensityMatrix, SteadyStateOptions};
use dimer_core::twa::{self, EnsembleRequest, SdeConfig};

use crate::config::{Experiment, RunConfig, SweepAxis, SweepObservable};
use crate::error::CliError;
use crate::output::{num, OutputDir, Table};

/// What a run produced besides its files.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub steps: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
}

pub fn execute(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunSummary, CliError> {
    let mut summary = RunSummary::default();
    if cfg.sweep.is_some() {
        sweep(cfg, out, &mut summary)?;
        return Ok(summary);
    }
    match cfg.experiment {
        Experiment::PhaseDiagram => phase_diagram(cfg, out, &mut summary)?,
        Experiment::GpEvolve => gp_evolve(cfg, out, &mut summary)?,
        Experiment::SteadyState => steady_state(cfg, out)?,
        Experiment::Observables => observables_run(cfg, out)?,
        Experiment::Spectrum => spectrum_run(cfg, out, &mut summary)?,
        Experiment::Twa => twa_run(cfg, out, &mut summary)?,
        Experiment::GapScaling => gap_scaling(cfg, out, &mut summary)?,
        Experiment::RhoAv => rho_av_run(cfg, out)?,
    }
    Ok(summary)
}

fn mean_field(cfg: &RunConfig, f_tilde: f64) -> Result<GpParams, CliError> {
    GpParams::from_dimer(&cfg.dimer_at(1.0, f_tilde)?).map_err(|e| CliError::validation(e.to_string()))
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        max_components: cfg.numeric.fit_components.unwrap_or(3),
        ..Default::default()
    }
}

fn phase_diagram(cfg: &RunConfig, out: &mut OutputDir, summary: &mut RunSummary) -> Result<(), CliError> {
    let grid = cfg.grid.as_ref().ok_or_else(|| CliError::validation("missing `grid`"))?;
    let js = grid.j.resolve("grid.j")?;
    let fs = grid.f_tilde.resolve("grid.f_tilde")?;
    let delta = cfg.delta()?;
    let deltas = grid.delta.clone().unwrap_or_else(|| vec![delta]);
    let base = GpParams::from_dimer(&cfg.dimer_with(1.0, 1.0, js[0])?)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let mut table = Table::new(
        "phase-diagram.csv",
        &["delta", "j", "f_tilde", "n_solutions", "region", "stabilities", "error"],
    );
    let mut cells = 0u64;
    for d in deltas {
        let mut p = base;
        p.delta_2 = d + (base.delta_2 - base.delta_1);
        p.delta_1 = d;
        let scan = gp::scan_phase_diagram(&p, &js, &fs).map_err(CliError::solver("phase-diagram scan"))?;
        for c in scan {
            cells += 1;
            if let Some(e) = &c.error {
                summary.warnings.push(format!("delta={} j={} f_tilde={}: {e}", c.delta, c.j, c.f_tilde));
            }
            let stab: Vec<&str> = c.stabilities.iter().map(|s| s.short()).collect();
            table.push(vec![
                num(c.delta),
                num(c.j),
                num(c.f_tilde),
                c.n_solutions.to_string(),
                c.region.label(),
                stab.join(";"),
                c.error.unwrap_or_default(),
            ]);
        }
    }
    summary.steps.insert("cells".into(), cells);
    out.write_table(&table)
}

#[derive(Serialize)]
struct FixedPointRecord {
    alpha1: Complex64,
    alpha2: Complex64,
    n1: f64,
    n2: f64,
    stability: gp::Stability,
    bogoliubov_rates: [Complex64; 4],
}

fn gp_evolve(cfg: &RunConfig, out: &mut OutputDir, summary: &mut RunSummary) -> Result<(), CliError> {
    let f_tilde = cfg.f_tilde()?;
    let p = mean_field(cfg, f_tilde)?;
    let dt = cfg.numeric.dt.unwrap_or(1e-3);
    let t_final = cfg.numeric.t_final.unwrap_or(1000.0);
    let stride = cfg.numeric.sample_stride.unwrap_or(100);
    let traj = gp::integrate_gp(GpState::vacuum(), &p, t_final, dt, stride).map_err(CliError::solver("mean-field integration"))?;
    summary.steps.insert("gp_steps".into(), (t_final / dt).round() as u64);
    let mut table = Table::new(
        "gp-evolve.csv",
        &["t", "re_alpha1", "im_alpha1", "re_alpha2", "im_alpha2", "n1", "n2", "z"],
    );
    for (t, s) in traj.times.iter().zip(&traj.states) {
        table.push(vec![
            num(*t),
            num(s.alpha_1.re),
            num(s.alpha_1.im),
            num(s.alpha_2.re),
            num(s.alpha_2.im),
            num(s.n1()),
            num(s.n2()),
            num(s.n1() - s.n2()),
        ]);
    }
    out.write_table(&table)?;
    let fixed: Vec<FixedPointRecord> = gp::find_steady_states(&p)
        .map_err(CliError::solver("mean-field fixed points"))?
        .into_iter()
        .map(|s| FixedPointRecord {
            alpha1: s.state.alpha_1,
            alpha2: s.state.alpha_2,
            n1: s.state.n1(),
            n2: s.state.n2(),
            stability: s.stability,
            bogoliubov_rates: s.bogoliubov_rates,
        })
        .collect();
    let transient = cfg.numeric.t_min.unwrap_or(t_final / 3.0);
    let cycle = match gp::limit_cycle_period(&traj, transient) {
        Ok(lc) => json!({ "period": lc.period, "omega0": std::f64::consts::TAU / lc.period, "t0": lc.t0, "spread": lc.spread, "returns": lc.intervals.len() }),
        Err(e) => json!({ "none": e.to_string() }),
    };
    out.write_json(
        "gp-evolve_fit.json",
        &json!({ "f_tilde": f_tilde, "fixed_points": fixed, "limit_cycle": cycle, "transient": transient }),
    )
}

fn steady_options() -> SteadyStateOptions {
    SteadyStateOptions::default()
}

fn solve_rho(p: &DimerParams, cfg: &RunConfig) -> Result<DensityMatrix, CliError> {
    let c = cfg.cutoffs()?;
    dimer_steady_state(p, c, &steady_options()).map_err(CliError::solver("steady state"))
}

fn steady_state(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let p = cfg.dimer()?;
    let rho = solve_rho(&p, cfg)?;
    let c = cfg.cutoffs()?.dims();
    let (n1, n2) = observables::photon_numbers(&rho).map_err(CliError::solver("photon numbers"))?;
    let min_eig = rho.min_eigenvalue().map_err(CliError::solver("steady-state spectrum"))?;
    let mut table = Table::new(
        "steady-state.csv",
        &["u", "f_tilde", "n_max_1", "n_max_2", "n1", "n2", "u_n1", "u_n2", "z", "trace", "min_eigenvalue"],
    );
    table.push(vec![
        num(p.u_1),
        num(p.f_tilde()),
        (c[0] - 1).to_string(),
        (c[1] - 1).to_string(),
        num(n1),
        num(n2),
        num(p.u_1 * n1),
        num(p.u_1 * n2),
        num(n1 - n2),
        num(rho.trace()),
        num(min_eig),
    ]);
    out.write_table(&table)?;
    if cfg.numeric.write_density_matrix.unwrap_or(false) {
        let m = rho.matrix();
        let d = rho.dim();
        let mut dm = Table::new("density-matrix.csv", &["row", "col", "re", "im"]);
        for r in 0..d {
            for col in 0..d {
                let v = m[(r, col)];
                dm.push(vec![r.to_string(), col.to_string(), num(v.re), num(v.im)]);
            }
        }
        out.write_table(&dm)?;
    }
    Ok(())
}

fn report_row(u: f64, f_tilde: f64, dims: [usize; 2], r: &ObservableReport) -> Vec<String> {
    vec![
        num(u),
        num(f_tilde),
        (dims[0] - 1).to_string(),
        (dims[1] - 1).to_string(),
        num(r.n1),
        num(r.n2),
        num(r.u_n1),
        num(r.u_n2),
        num(r.z),
        num(r.e_n),
        num(r.s),
    ]
}

fn observables_run(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let p = cfg.dimer()?;
    let rho = solve_rho(&p, cfg)?;
    let rep = ObservableReport::from_density_matrix(&rho, p.u_1).map_err(CliError::solver("observables"))?;
    let mut table = Table::new(
        "observables.csv",
        &["u", "f_tilde", "n_max_1", "n_max_2", "n1", "n2", "u_n1", "u_n2", "z", "e_n", "s"],
    );
    table.push(report_row(p.u_1, p.f_tilde(), cfg.cutoffs()?.dims(), &rep));
    out.write_table(&table)
}

fn spectrum_options(cfg: &RunConfig) -> Result<SpectrumOptions, CliError> {
    Ok(SpectrumOptions {
        k: cfg.numeric.k.unwrap_or(10),
        kappa: cfg.kappa()?,
        ..Default::default()
    })
}

fn compute_spectrum(p: &DimerParams, cfg: &RunConfig) -> Result<SpectrumResult, CliError> {
    dimer_spectrum(p, cfg.cutoffs()?, &spectrum_options(cfg)?).map_err(CliError::solver("Liouvillian spectrum"))
}

fn spectrum_run(cfg: &RunConfig, out: &mut OutputDir, summary: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.dimer()?;
    let res = compute_spectrum(&p, cfg)?;
    if res.near_degenerate {
        summary.warnings.push("gap is below the near-degeneracy threshold".into());
    }
    let mut table = Table::new("spectrum.csv", &["index", "re", "im"]);
    for (k, e) in res.eigenvalues.iter().enumerate() {
        table.push(vec![k.to_string(), num(e.re), num(e.im)]);
    }
    out.write_table(&table)?;
    let c = cfg.cutoffs()?.dims();
    out.write_json(
        "spectrum_fit.json",
        &json!({
            "u": p.u_1,
            "f_tilde": p.f_tilde(),
            "n_max": [c[0] - 1, c[1] - 1],
            "gap": res.gap,
            "near_degenerate": res.near_degenerate,
            "fundamental_frequency": res.fundamental_frequency,
            "band_multiples": res.band_multiples,
            "max_residual": res.max_residual,
            "conjugate_mismatch": res.conjugate_mismatch,
            "method": res.method,
        }),
    )
}

fn sde_config(cfg: &RunConfig, t_final_default: f64) -> SdeConfig {
    let n = &cfg.numeric;
    let dt = n.dt.unwrap_or(1e-3);
    SdeConfig {
        dt,
        t_final: n.t_final.unwrap_or(t_final_default),
        n_traj: n.n_traj.unwrap_or(1000),
        master_seed: cfg.seed(),
        noise_enabled: n.noise.unwrap_or(true),
        sample_stride: n.sample_stride.unwrap_or(((0.05 / dt).round() as usize).max(1)),
    }
}

fn twa_run(cfg: &RunConfig, out: &mut OutputDir, summary: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.dimer()?;
    let sde = sde_config(cfg, 100.0);
    let request = EnsembleRequest {
        snapshot_times: cfg.numeric.snapshot_times.clone().unwrap_or_default(),
        keep_trajectories: cfg.numeric.keep_trajectories.unwrap_or(5),
    };
    let ens = twa::run_ensemble(&p, &sde, &request).map_err(CliError::solver("TWA ensemble"))?;
    summary.steps.insert("twa_steps".into(), (sde.steps() * sde.n_traj) as u64);
    if !ens.excluded.is_empty() {
        summary.warnings.push(format!(
            "{} of {} trajectories diverged and were excluded",
            ens.excluded.len(),
            sde.n_traj
        ));
    }
    let s = twa::ensemble_observables(&ens).map_err(CliError::solver("ensemble statistics"))?;
    let u = p.u_1;
    let mut table = Table::new(
        "twa.csv",
        &["t", "n1", "n2", "z", "n1_err", "n2_err", "z_err", "u_n1", "u_n2", "u_z"],
    );
    for k in 0..s.times.len() {
        table.push(vec![
            num(s.times[k]),
            num(s.n1[k]),
            num(s.n2[k]),
            num(s.z[k]),
            num(s.n1_err[k]),
            num(s.n2_err[k]),
            num(s.z_err[k]),
            num(u * s.n1[k]),
            num(u * s.n2[k]),
            num(u * s.z[k]),
        ]);
    }
    out.write_table(&table)?;

    if !ens.kept.is_empty() {
        let mut t = Table::new(
            "twa-trajectories.csv",
            &["trajectory", "t", "re_alpha1", "im_alpha1", "re_alpha2", "im_alpha2", "z"],
        );
        for tr in &ens.kept {
            for (time, (a, b)) in tr.times.iter().zip(&tr.fields) {
                t.push(vec![
                    tr.index.to_string(),
                    num(*time),
                    num(a.re),
                    num(a.im),
                    num(b.re),
                    num(b.im),
                    num(a.norm_sqr() - b.norm_sqr()),
                ]);
            }
        }
        out.write_table(&t)?;
    }
    if !ens.snapshots.is_empty() {
        let bins = cfg.numeric.histogram_bins.unwrap_or(64);
        let mut t = Table::new("twa-histogram.csv", &["time", "mode", "re_lo", "re_hi", "im_lo", "im_hi", "count"]);
        for snap in &ens.snapshots {
            let h = twa::phase_space_histogram(&ens, snap.time, bins, None).map_err(CliError::solver("histogram"))?;
            for mode in 0..2 {
                for i in 0..bins {
                    for j in 0..bins {
                        t.push(vec![
                            num(h.time),
                            (mode + 1).to_string(),
                            num(h.edges[i]),
                            num(h.edges[i + 1]),
                            num(h.edges[j]),
                            num(h.edges[j + 1]),
                            h.counts[mode][i * bins + j].to_string(),
                        ]);
                    }
                }
            }
        }
        out.write_table(&t)?;
    }

    let t_min = cfg.numeric.t_min.unwrap_or(20.0);
    let fit = match fit::fit_damped_oscillations(&s.times, &s.z, t_min, &fit_options(cfg)) {
        Ok(f) => serde_json::to_value(f).unwrap_or_default(),
        Err(e) => {
            summary.warnings.push(format!("fit failed: {e}"));
            json!({ "kind": "error", "message": e.to_string() })
        }
    };
    out.write_json(
        "twa_fit.json",
        &json!({
            "u": u,
            "f_tilde": p.f_tilde(),
            "t_min": t_min,
            "fit": fit,
            "n_used": ens.n_used,
            "excluded": ens.excluded,
            "exclusion_rate": ens.exclusion_rate(),
            "seeds": ens.seeds,
        }),
    )
}

fn gap_scaling(cfg: &RunConfig, out: &mut OutputDir, summary: &mut RunSummary) -> Result<(), CliError> {
    let s = cfg.scaling.as_ref().ok_or_else(|| CliError::validation("missing `scaling`"))?;
    let f_tilde = cfg.f_tilde()?;
    let base = cfg.dimer_at(s.u_values[0], f_tilde)?;
    let t_min = cfg.numeric.t_min.unwrap_or(20.0);
    let mut points = Vec::new();
    let mut steps = 0u64;
    for (k, &u) in s.u_values.iter().enumerate() {
        let default_t = (10.0 / u).max(cfg.numeric.t_final.unwrap_or(0.0));
        let mut sde = sde_config(cfg, default_t);
        sde.t_final = s.t_final.as_ref().map(|t| t[k]).unwrap_or(default_t);
        steps += (sde.steps() * sde.n_traj) as u64;
        points.push(GapPoint { u, config: sde, t_min });
    }
    let results = fit::gap_scaling_points(&base, f_tilde, &points, &fit_options(cfg))
        .map_err(CliError::solver("gap scaling"))?;
    summary.steps.insert("twa_steps".into(), steps);
    let mut table = Table::new(
        "gap-scaling.csv",
        &["u", "lambda", "omega0", "frequencies", "integer_multiples", "excluded", "warning"],
    );
    for r in &results {
        if let Some(w) = &r.warning {
            summary.warnings.push(format!("U={}: {w}; point excluded", r.u));
        }
        let (lambda, omega0, freqs, multiples) = match &r.fit {
            Some(f) => (
                num(f.lambda_gap),
                num(f.omega0),
                f.frequencies.iter().map(|w| num(*w)).collect::<Vec<_>>().join(";"),
                f.integer_multiples.to_string(),
            ),
            None => Default::default(),
        };
        table.push(vec![
            num(r.u),
            lambda,
            omega0,
            freqs,
            multiples,
            r.excluded_trajectories.to_string(),
            r.warning.clone().unwrap_or_default(),
        ]);
    }
    out.write_table(&table)?;
    let law = fit::scaling_law(&results);
    out.write_json(
        "gap-scaling_fit.json",
        &json!({
            "f_tilde": f_tilde,
            "t_min": t_min,
            "law": law.as_ref().ok(),
            "error": law.as_ref().err().map(|e| e.to_string()),
            "points": results,
        }),
    )?;
    law.map(|_| ()).map_err(CliError::solver("power-law fit"))
}

struct RhoAv {
    period: f64,
    mix: CoherentMixture,
    report: ObservableReport,
}

fn rho_av(cfg: &RunConfig, u: f64, f_tilde: f64) -> Result<RhoAv, CliError> {
    let p = mean_field(cfg, f_tilde)?;
    let dt = cfg.numeric.dt.unwrap_or(1e-3);
    let t_final = cfg.numeric.t_final.unwrap_or(900.0);
    let transient = cfg.numeric.t_min.unwrap_or(t_final / 3.0);
    let traj = gp::integrate_gp(GpState::vacuum(), &p, t_final, dt, 10).map_err(CliError::solver("mean-field integration"))?;
    match gp::limit_cycle_period(&traj, transient) {
        Ok(lc) => {
            let (mix, report) = observables::converged_time_average(&lc, &p, u, 0.005, 4096)
                .map_err(CliError::solver("time-averaged state"))?;
            Ok(RhoAv { period: lc.period, mix, report })
        }
        Err(cycle_err) => {
            // A fixed point is a one-state average.
            let last = *traj.states.last().expect("trajectory has samples");
            if gp::residual(&last, &p) > 1e-6 {
                return Err(CliError::Solver { context: "limit cycle".into(), source: cycle_err });
            }
            let amp = [last.unscaled(u)];
            let cut = CoherentMixture::cutoffs_for(&amp).map_err(CliError::solver("coherent cutoff"))?;
            let mix = observables::time_averaged_rho(&amp, cut).map_err(CliError::solver("time-averaged state"))?;
            let report = ObservableReport::from_mixture(&mix, u).map_err(CliError::solver("observables"))?;
            Ok(RhoAv { period: f64::NAN, mix, report })
        }
    }
}

fn rho_av_run(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let u = cfg.u()?;
    let f_tilde = cfg.f_tilde()?;
    let r = rho_av(cfg, u, f_tilde)?;
    let mut table = Table::new(
        "rho-av.csv",
        &["u", "f_tilde", "period", "samples", "n1", "n2", "u_n1", "u_n2", "z", "e_n", "s"],
    );
    let rep = &r.report;
    table.push(vec![
        num(u),
        num(f_tilde),
        num(r.period),
        r.mix.len().to_string(),
        num(rep.n1),
        num(rep.n2),
        num(rep.u_n1),
        num(rep.u_n2),
        num(rep.z),
        num(rep.e_n),
        num(rep.s),
    ]);
    out.write_table(&table)
}

#[derive(Default)]
struct SweepRow {
    values: BTreeMap<SweepObservable, f64>,
    errors: Vec<String>,
}

fn sweep_point(cfg: &RunConfig, axis: SweepAxis, x: f64, wanted: &[SweepObservable]) -> SweepRow {
    let mut row = SweepRow::default();
    let (u, f_tilde) = match axis {
        SweepAxis::U => (Ok(x), cfg.f_tilde()),
        SweepAxis::FTilde => (cfg.u(), Ok(x)),
    };
    let (u, f_tilde) = match (u, f_tilde) {
        (Ok(u), Ok(f)) => (u, f),
        (Err(e), _) | (_, Err(e)) => {
            row.errors.push(e.to_string());
            return row;
        }
    };
    let needs_state = wanted.iter().any(|o| !o.needs_spectrum());
    let needs_spectrum = wanted.iter().any(|o| o.needs_spectrum());
    if needs_state {
        let report = if cfg.experiment == Experiment::RhoAv {
            rho_av(cfg, u, f_tilde).map(|r| {
                row.values.insert(SweepObservable::Omega0, std::f64::consts::TAU / r.period);
                r.report
            })
        } else {
            cfg.dimer_at(u, f_tilde).and_then(|p| {
                let rho = solve_rho(&p, cfg)?;
                ObservableReport::from_density_matrix(&rho, u).map_err(CliError::solver("observables"))
            })
        };
        match report {
            Ok(r) => {
                for (k, v) in [
                    (SweepObservable::N1, r.n1),
                    (SweepObservable::N2, r.n2),
                    (SweepObservable::UN1, r.u_n1),
                    (SweepObservable::UN2, r.u_n2),
                    (SweepObservable::EN, r.e_n),
                    (SweepObservable::S, r.s),
                ] {
                    row.values.insert(k, v);
                }
            }
            Err(e) => row.errors.push(e.to_string()),
        }
    }
    if needs_spectrum && cfg.experiment != Experiment::RhoAv {
        match cfg.dimer_at(u, f_tilde).and_then(|p| compute_spectrum(&p, cfg)) {
            Ok(s) => {
                if let Some(g) = s.gap {
                    row.values.insert(SweepObservable::Lambda, g);
                }
                let slow = s.eigenvalues.iter().skip(1).find(|e| e.im.abs() > 1e-9);
                if let Some(w) = s.fundamental_frequency.or(slow.map(|e| e.im.abs())) {
                    row.values.insert(SweepObservable::Omega0, w);
                }
            }
            Err(e) => row.errors.push(e.to_string()),
        }
    }
    row
}

fn sweep(cfg: &RunConfig, out: &mut OutputDir, summary: &mut RunSummary) -> Result<(), CliError> {
    let s = cfg.sweep.as_ref().expect("sweep block");
    let xs = s.values()?;
    let wanted = s.observables();
    let axis_name = match s.axis {
        SweepAxis::U => "u",
        SweepAxis::FTilde => "f_tilde",
    };
    let rows: Vec<SweepRow> = xs.par_iter().map(|&x| sweep_point(cfg, s.axis, x, &wanted)).collect();
    let mut header = vec![axis_name];
    header.extend(wanted.iter().map(|o| o.column()));
    header.push("error");
    let mut table = Table::new(format!("{}.csv", cfg.experiment.name()), &header);
    for (x, r) in xs.iter().zip(rows) {
        let mut line = vec![num(*x)];
        line.extend(wanted.iter().map(|o| r.values.get(o).map(|v| num(*v)).unwrap_or_default()));
        if !r.errors.is_empty() {
            summary.warnings.push(format!("{axis_name}={x}: {}", r.errors.join("; ")));
        }
        line.push(r.errors.join("; "));
        table.push(line);
    }
    summary.steps.insert("sweep_points".into(), xs.len() as u64);
    out.write_table(&table)
}
