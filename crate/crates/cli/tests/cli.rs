use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dimer-dtc"));
    c.env_remove("DIMER_DTC_WORKERS");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

const PHASE: &str = r#"{
  "experiment": "phase-diagram",
  "params": {"delta": 2.0},
  "grid": {"j": {"start": 0.5, "stop": 3.0, "points": 5}, "f_tilde": {"values": [0.95, 1.5, 2.5]}}
}"#;

#[test]
fn unknown_key_is_a_validation_error_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\n  \"experiment\": \"twa\",\n  \"params\": {\"delta\": 2, \"fTilde\": 1.5}\n}",
    );
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["kind"], "validation");
    let msg = rec["message"].as_str().unwrap();
    assert!(msg.contains("did you mean `f_tilde`"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn valid_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pd.json", PHASE);
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn phase_diagram_schema_and_manifest_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pd.json", PHASE);
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut reader = csv::Reader::from_path(out_dir.join("phase-diagram.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["delta", "j", "f_tilde", "n_solutions", "region", "stabilities", "error"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    let at = |j: f64, f: f64| {
        rows.iter()
            .find(|r| (r[1].parse::<f64>().unwrap() - j).abs() < 1e-12 && r[2].parse::<f64>().unwrap() == f)
            .unwrap()
            .clone()
    };
    assert_eq!(&at(1.125, 1.5)[4], "1P");

    let m = manifest(&out_dir);
    assert_eq!(m["experiment"], "phase-diagram");
    assert_eq!(m["config"]["params"]["delta"], 2.0);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    for o in outputs {
        let bytes = std::fs::read(out_dir.join(o["file"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(o["sha256"].as_str().unwrap(), hex);
    }
}

#[test]
fn twa_reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "twa.json",
        r#"{"experiment": "twa",
            "params": {"delta": 2, "j": 1.2, "u": 0.1, "f_tilde": 1.5},
            "numeric": {"n_traj": 40, "t_final": 40, "dt": 0.005, "seed": 3, "sample_stride": 10,
                        "snapshot_times": [20], "histogram_bins": 4, "keep_trajectories": 2}}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&cfg, &a, &["--workers", "1"]).status.success());
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(&b).env("DIMER_DTC_WORKERS", "3").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(&a)["workers"], 1);
    assert_eq!(manifest(&b)["workers"], 3);
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
    for f in ["twa.csv", "twa-trajectories.csv", "twa-histogram.csv", "twa_fit.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "twa.json",
        r#"{"experiment": "twa", "params": {"delta": 2, "j": 1.2, "u": 0.1, "f_tilde": 1.5},
            "numeric": {"n_traj": 8, "t_final": 5, "dt": 0.01, "seed": 1, "keep_trajectories": 0}}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &["--seed", "2"]).status.success());
    assert_eq!(manifest(&b)["master_seed"], 2);
    assert_ne!(std::fs::read(a.join("twa.csv")).unwrap(), std::fs::read(b.join("twa.csv")).unwrap());
}

#[test]
fn failed_scaling_fit_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gs.json",
        r#"{"experiment": "gap-scaling", "params": {"delta": 2, "j": 1.2, "f_tilde": 1.5},
            "numeric": {"n_traj": 4, "dt": 0.01},
            "scaling": {"u_values": [0.1, 0.05, 0.01], "t_final": [3, 3, 3]}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(3));
    let rec: Value = serde_json::from_slice(&std::fs::read(out_dir.join("error.json")).unwrap()).unwrap();
    assert_eq!(rec["exit_code"], 3);
    // The per-point table is still written.
    let table = std::fs::read_to_string(out_dir.join("gap-scaling.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn sweep_records_points_and_observables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sw.json",
        r#"{"experiment": "observables", "params": {"delta": 2, "j": 1.2, "u": 1, "f_tilde": 1.5},
            "numeric": {"n_max": 3},
            "sweep": {"axis": "f_tilde", "values": [0.5, 1.5], "observables": ["e_n", "n1", "lambda"]}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(out_dir.join("observables.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["f_tilde", "n1", "e_n", "lambda", "error"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[4], "");
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ss.json",
        r#"{"experiment": "steady-state", "params": {"delta": 2, "j": 1.2, "u": 1, "f_tilde": 0.95},
            "numeric": {"n_max": 3}}"#,
    );
    let out_dir = dir.path().join("out");
    assert!(run(&cfg, &out_dir, &[]).status.success());
    let text = std::fs::read_to_string(out_dir.join("steady-state.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let n1 = row.split(',').nth(4).unwrap();
    let mantissa = n1.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{n1}");
}
