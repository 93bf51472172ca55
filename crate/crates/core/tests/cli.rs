use std::fs;
use std::path::Path;
use std::process::Command;

use floqres::cli::config::ExperimentConfig;
use floqres::cli::runner::prepare;
use floqres::cli::{run_experiment, scan_experiment};

const SMALL: &str = r#"{"name": "small", "model": {"lattice": {"kind": "ladder", "rungs": 3}, "drive": {"omega": 20, "flux_over_pi": 0.5}, "u": -8,
 "excitations": 1, "photons": 3, "cavities": [{"site": 0, "delta_over_omega": 1.76, "g": 1, "kappa": 0.1, "pump": [1.2, 0]},
 {"site": 2, "delta_over_omega": 1.7, "g": 1, "kappa": 0.1, "pump": [0.5, 0]}]},
 "design": {"assignments": [{"cavity": 0, "transitions": [[2, 0], [3, 1], [4, 2], [5, 3]], "keep_pump": true},
 {"cavity": 1, "transitions": [[1, 0], [3, 2], [5, 4]], "keep_pump": true}]},
 "run": {"runner": "effective", "initial": {"kind": "sites", "sites": [5]}, "t_final": 20, "dt": 5},
 "observables": {"include": ["populations", "discarded", "densities"]}}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_floqres"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn data_rows(p: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn manifest_rerun_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&a).output().unwrap().status;
    assert!(st.success());
    let st = bin().args(["run", "--config"]).arg(a.join("manifest.json")).arg("--out").arg(&b).output().unwrap().status;
    assert!(st.success());
    let ta = fs::read(a.join("timeseries.csv")).unwrap();
    let tb = fs::read(b.join("timeseries.csv")).unwrap();
    assert_eq!(ta, tb);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "run");
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o == "timeseries.csv"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let bad = write_config(tmp.path(), &SMALL.replace(r#""u": -8"#, r#""u": -8, "typo_key": 1"#));
    let o = bin().args(["design", "--config"]).arg(&bad).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo_key"));

    let slow = SMALL.replace(r#""omega": 20"#, r#""omega": 2.3"#).replace(r#""u": -8,"#, r#""u": -8, "resonance_threshold_g": 1e-9,"#);
    let cfg = write_config(tmp.path(), &slow);
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(out.join("design.json").exists());
    assert!(!out.join("timeseries.csv").exists());
    let o = bin().args(["design", "--force", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));

    let o = bin().args(["run", "--preset", "no_such_preset"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["run", "--bogus-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_presets_names_every_preset() {
    let o = bin().arg("list-presets").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["fig3c_ladder_1exc", "fig3d_ladder_2exc_hardcore", "sm_abcage", "fig4_interband_100"] {
        assert!(text.contains(id), "{id} missing");
    }
}

#[test]
fn empty_observables_write_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::from_json(SMALL, "small").unwrap();
    c.observables.include.clear();
    c.output.dir = tmp.path().display().to_string();
    let o = run_experiment(&c, false).unwrap();
    assert!(o.timeseries.is_none());
    assert!(!o.outputs.iter().any(|f| f == "timeseries.csv"));
    assert!(tmp.path().join("manifest.json").exists());
    assert!(!tmp.path().join("timeseries.csv").exists());
}

#[test]
fn zero_cavities_is_coherent_lattice_dynamics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    v["model"]["cavities"] = serde_json::json!([]);
    v["design"]["assignments"] = serde_json::json!([]);
    let mut c = ExperimentConfig::from_json(&v.to_string(), "nocav").unwrap();
    c.output.dir = tmp.path().display().to_string();
    let ts = run_experiment(&c, true).unwrap().timeseries.unwrap();
    let lost = ts.columns.iter().position(|c| c == "discarded").unwrap();
    let pops: Vec<usize> = (0..ts.columns.len()).filter(|&i| ts.columns[i].starts_with("p_")).collect();
    for row in &ts.values {
        assert!(row[lost].abs() < 1e-10);
        // eigenstate populations are conserved by the effective Hamiltonian
        for (&i, &x) in pops.iter().zip(&ts.values[0]) {
            assert!((row[i] - x).abs() < 1e-6, "{} drifted", ts.columns[i]);
        }
    }
}

#[test]
fn single_point_scan_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    v["scan"] = serde_json::json!({"axes": [{"name": "u", "values": [-8.0]}]});
    let mut c = ExperimentConfig::from_json(&v.to_string(), "scan").unwrap();
    c.output.dir = tmp.path().join("scan").display().to_string();
    let sc = scan_experiment(&c, false).unwrap().scan.unwrap();
    let mut r = c.clone();
    r.scan = None;
    r.output.dir = tmp.path().join("run").display().to_string();
    let ts = run_experiment(&r, false).unwrap().timeseries.unwrap();
    assert_eq!(sc.rows.len(), ts.times.len());
    for (row, vals) in sc.rows.iter().zip(&ts.values) {
        assert_eq!(&row.values[..vals.len()], &vals[..]);
    }
    let rows = data_rows(&tmp.path().join("run/timeseries.csv"));
    assert_eq!(rows.len(), ts.times.len());
}

#[test]
fn flux_scan_resolves_lambda() {
    let mut c = ExperimentConfig::from_json(SMALL, "small").unwrap();
    let l1 = prepare(&c).unwrap().drive.lambda;
    c.set_param("flux_over_pi", 0.25).unwrap();
    let p = prepare(&c).unwrap();
    assert!((p.drive.lambda - l1).abs() > 1e-3);
    c.set_param("flux_over_pi", 0.5).unwrap();
    assert_eq!(prepare(&c).unwrap().drive.lambda, l1);
}
