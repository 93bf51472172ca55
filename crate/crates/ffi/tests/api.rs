use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use floqres_ffi::*;

const SMALL: &str = r#"{"name": "ffi", "model": {"lattice": {"kind": "ladder", "rungs": 3}, "drive": {"omega": 20, "flux_over_pi": 0.5}, "u": -8,
 "excitations": 1, "photons": 3, "cavities": [{"site": 0, "delta_over_omega": 1.76, "g": 1, "kappa": 0.1, "pump": [1.2, 0]},
 {"site": 2, "delta_over_omega": 1.7, "g": 1, "kappa": 0.1, "pump": [0.5, 0]}]},
 "design": {"assignments": [{"cavity": 0, "transitions": [[2, 0], [3, 1], [4, 2], [5, 3]], "keep_pump": true},
 {"cavity": 1, "transitions": [[1, 0], [3, 2], [5, 4]], "keep_pump": true}]},
 "run": {"runner": "effective", "initial": {"kind": "sites", "sites": [5]}, "t_final": 10, "dt": 2.5},
 "observables": {"include": ["populations", "discarded"]}}"#;

fn experiment(json: &str) -> *mut FqExperiment {
    let c = CString::new(json).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { fq_experiment_from_json(c.as_ptr(), &mut exp) }, FqStatus::Ok);
    exp
}

fn last_error() -> String {
    let p = fq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn design_reports_spectrum_and_cavities() {
    let exp = experiment(SMALL);
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(fq_design(exp, 0, &mut d), FqStatus::Ok);
        let n = fq_design_n_states(d);
        assert_eq!(n, 6);
        assert_eq!(fq_design_n_cavities(d), 2);
        let mut e = vec![0.0; n];
        assert_eq!(fq_design_energies(d, e.as_mut_ptr(), n), FqStatus::Ok);
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(fq_design_energies(d, e.as_mut_ptr(), n - 1), FqStatus::OutOfRange);
        let (mut det, mut nbar) = (0.0, 0.0);
        assert_eq!(fq_design_cavity(d, 1, &mut det, &mut nbar), FqStatus::Ok);
        assert!(det.is_finite() && nbar > 0.0);
        assert_eq!(fq_design_cavity(d, 7, &mut det, &mut nbar), FqStatus::OutOfRange);
        assert!(last_error().contains('7'));
        fq_design_free(d);
        fq_experiment_free(exp);
    }
}

#[test]
fn run_exposes_columns() {
    let exp = experiment(SMALL);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(fq_run(exp, 0, &mut s), FqStatus::Ok);
        let nt = fq_series_n_times(s);
        let nc = fq_series_n_columns(s);
        assert_eq!(nt, 5);
        assert_eq!(nc, 7);
        let mut t = vec![0.0; nt];
        assert_eq!(fq_series_times(s, t.as_mut_ptr(), nt), FqStatus::Ok);
        assert_eq!(t[0], 0.0);
        let names: Vec<String> = (0..nc).map(|i| CStr::from_ptr(fq_series_column_name(s, i)).to_string_lossy().into_owned()).collect();
        assert_eq!(names[0], "p_0");
        assert_eq!(names[6], "discarded");
        assert!(fq_series_column_name(s, nc).is_null());
        let mut total = vec![0.0; nt];
        let mut v = vec![0.0; nt];
        let mut se = vec![1.0; nt];
        for c in 0..6 {
            assert_eq!(fq_series_column(s, c, v.as_mut_ptr(), se.as_mut_ptr(), nt), FqStatus::Ok);
            total.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        assert!(total.iter().all(|x| (x - 1.0).abs() < 1e-8), "{total:?}");
        assert!(se.iter().all(|&x| x == 0.0));
        assert_eq!(fq_series_column(s, 0, v.as_mut_ptr(), ptr::null_mut(), nt), FqStatus::Ok);
        assert_eq!(fq_series_column(s, nc, v.as_mut_ptr(), ptr::null_mut(), nt), FqStatus::OutOfRange);
        fq_series_free(s);
        fq_experiment_free(exp);
    }
}

#[test]
fn set_and_round_trip() {
    let exp = experiment(SMALL);
    unsafe {
        let name = CString::new("t_final").unwrap();
        assert_eq!(fq_experiment_set(exp, name.as_ptr(), 5.0), FqStatus::Ok);
        let bad = CString::new("no_such_knob").unwrap();
        assert_eq!(fq_experiment_set(exp, bad.as_ptr(), 1.0), FqStatus::Config);
        assert!(last_error().contains("no_such_knob"));
        let mut js = ptr::null_mut();
        assert_eq!(fq_experiment_to_json(exp, &mut js), FqStatus::Ok);
        let text = CStr::from_ptr(js).to_str().unwrap().to_owned();
        fq_string_free(js);
        let again = experiment(&text);
        let mut s = ptr::null_mut();
        assert_eq!(fq_run(again, 0, &mut s), FqStatus::Ok);
        assert_eq!(fq_series_n_times(s), 3);
        fq_series_free(s);
        fq_experiment_free(again);
        fq_experiment_free(exp);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut exp = ptr::null_mut();
        let junk = CString::new("{ not json").unwrap();
        assert_eq!(fq_experiment_from_json(junk.as_ptr(), &mut exp), FqStatus::Config);
        assert!(exp.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(fq_experiment_from_json(ptr::null(), &mut exp), FqStatus::NullPointer);
        assert_eq!(fq_experiment_from_json(junk.as_ptr(), ptr::null_mut()), FqStatus::NullPointer);
        let bytes = [0xffu8, 0xfe, 0];
        assert_eq!(fq_experiment_from_json(bytes.as_ptr().cast(), &mut exp), FqStatus::InvalidUtf8);
        let unknown = CString::new("no_such_preset").unwrap();
        assert_eq!(fq_experiment_from_preset(unknown.as_ptr(), &mut exp), FqStatus::Config);
        let mut d = ptr::null_mut();
        assert_eq!(fq_design(ptr::null(), 0, &mut d), FqStatus::NullPointer);
        assert_eq!(fq_design_n_states(ptr::null()), 0);
        assert_eq!(fq_series_n_times(ptr::null()), 0);
        assert!(fq_series_column_name(ptr::null(), 0).is_null());
        fq_experiment_free(ptr::null_mut());
        fq_design_free(ptr::null_mut());
        fq_series_free(ptr::null_mut());
        fq_string_free(ptr::null_mut());
    }
}

#[test]
fn regime_failure_needs_force() {
    let exp = experiment(&SMALL.replace(r#""omega": 20"#, r#""omega": 2.3"#).replace(r#""u": -8,"#, r#""u": -8, "resonance_threshold_g": 1e-9,"#));
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(fq_design(exp, 0, &mut d), FqStatus::Regime);
        assert!(d.is_null());
        assert_eq!(fq_design(exp, 1, &mut d), FqStatus::Ok);
        fq_design_free(d);
        fq_experiment_free(exp);
    }
}

#[test]
fn presets_load() {
    let id = CString::new("fig3c_ladder_1exc").unwrap();
    let mut exp = ptr::null_mut();
    unsafe {
        assert_eq!(fq_experiment_from_preset(id.as_ptr(), &mut exp), FqStatus::Ok);
        fq_experiment_free(exp);
    }
    let v = unsafe { CStr::from_ptr(fq_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn header_compiles_as_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/floqres.h");
    assert!(header.exists(), "header not generated");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = match std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests/header.c"))
        .output()
    {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipping: no C compiler ({cc}: {e})");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
