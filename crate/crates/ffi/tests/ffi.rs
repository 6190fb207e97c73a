use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use nonlocal_flow_ffi::*;

const SPEC: &str = r#"{
    "label": "box",
    "variant": "nonlocal_velocity",
    "kernel": {"family": "exponential", "eta": 0.1},
    "velocity": {"family": "quadratic"},
    "datum": {"family": "box", "base": 0.25, "height": 0.5, "a": -0.5, "b": 0.5},
    "grid": {"x_min": -2.0, "x_max": 2.0, "n_cells": 200},
    "t_end": 0.5
}"#;

fn last_error() -> String {
    let p = nf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_sim(json: &str) -> Result<*mut NfSimulation, NfStatus> {
    let text = CString::new(json).unwrap();
    let mut sim = ptr::null_mut();
    match unsafe { nf_simulation_new(text.as_ptr(), &mut sim) } {
        NfStatus::Ok => Ok(sim),
        s => {
            assert!(sim.is_null());
            Err(s)
        }
    }
}

#[test]
fn full_round_trip() {
    let sim = new_sim(SPEC).unwrap();
    unsafe {
        let mut n = 0;
        assert_eq!(nf_simulation_cell_count(sim, &mut n), NfStatus::Ok);
        assert_eq!(n, 200);
        let mut count = 0;
        assert_eq!(nf_simulation_snapshot_count(sim, &mut count), NfStatus::NotRun);
        assert!(last_error().contains("not been run"));

        assert_eq!(nf_simulation_run(sim), NfStatus::Ok);
        assert_eq!(nf_simulation_snapshot_count(sim, &mut count), NfStatus::Ok);
        assert_eq!(count, 11);

        let mut q = vec![0.0; n];
        let mut w = vec![0.0; n + 1];
        let mut t = -1.0;
        let last = count - 1;
        let s = nf_simulation_copy_snapshot(sim, last, &mut t, q.as_mut_ptr(), n, w.as_mut_ptr(), n + 1);
        assert_eq!(s, NfStatus::Ok);
        assert_eq!(t, 0.5);
        // boundary fluxes differ only through the kernel tail, about exp(-1.5 / eta)
        let mass: f64 = q.iter().sum::<f64>() * 4.0 / n as f64;
        let initial = 0.25 * 4.0 + 0.5;
        assert!((mass - initial).abs() < 1e-6, "{mass}");
        assert!(q.iter().all(|&v| (0.25 - 1e-12..=0.75 + 1e-12).contains(&v)));
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let mut tv = 0.0;
        assert_eq!(
            nf_total_variation(q.as_ptr(), n, 0.25, 0.25, &mut tv),
            NfStatus::Ok
        );
        assert!(tv <= 1.0 + 1e-12, "{tv}");

        // speeds are optional
        let s = nf_simulation_copy_snapshot(sim, 0, &mut t, q.as_mut_ptr(), n, ptr::null_mut(), 0);
        assert_eq!(s, NfStatus::Ok);
        assert_eq!(t, 0.0);

        let mut report = ptr::null_mut();
        assert_eq!(
            nf_simulation_report_json(sim, ptr::null(), &mut report),
            NfStatus::Ok
        );
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        nf_string_free(report);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.is_object());

        nf_simulation_free(sim);
    }
}

#[test]
fn rejects_invalid_specs() {
    assert_eq!(new_sim("{").unwrap_err(), NfStatus::InvalidConfig);
    let bad = SPEC.replace("\"t_end\": 0.5", "\"t_end\": 0.5, \"cfl\": 0.9");
    assert_eq!(new_sim(&bad).unwrap_err(), NfStatus::InvalidConfig);
    assert!(last_error().contains("cfl"));
    let increasing = SPEC
        .replace("quadratic", "linear")
        .replace("\"eta\": 0.1", "\"eta\": -1.0");
    assert_eq!(new_sim(&increasing).unwrap_err(), NfStatus::InvalidConfig);

    let invalid_utf8 = [0xffu8, 0xfe, 0];
    let mut sim = ptr::null_mut();
    let s = unsafe { nf_simulation_new(invalid_utf8.as_ptr().cast(), &mut sim) };
    assert_eq!(s, NfStatus::InvalidUtf8);
}

#[test]
fn null_and_range_checks() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(nf_simulation_new(ptr::null(), &mut sim), NfStatus::NullPointer);
        let text = CString::new(SPEC).unwrap();
        assert_eq!(
            nf_simulation_new(text.as_ptr(), ptr::null_mut()),
            NfStatus::NullPointer
        );
        assert_eq!(nf_simulation_run(ptr::null_mut()), NfStatus::NullPointer);
        let mut n = 0;
        assert_eq!(
            nf_simulation_cell_count(ptr::null(), &mut n),
            NfStatus::NullPointer
        );
        nf_simulation_free(ptr::null_mut());
        nf_string_free(ptr::null_mut());

        let sim = new_sim(SPEC).unwrap();
        assert_eq!(
            nf_simulation_cell_count(sim, ptr::null_mut()),
            NfStatus::NullPointer
        );
        assert_eq!(nf_simulation_run(sim), NfStatus::Ok);
        let mut q = vec![0.0; 200];
        let mut t = 0.0;
        let s = nf_simulation_copy_snapshot(sim, 11, &mut t, q.as_mut_ptr(), 200, ptr::null_mut(), 0);
        assert_eq!(s, NfStatus::OutOfRange);
        let s = nf_simulation_copy_snapshot(sim, 0, &mut t, q.as_mut_ptr(), 199, ptr::null_mut(), 0);
        assert_eq!(s, NfStatus::LengthMismatch);
        let mut w = vec![0.0; 200];
        let s = nf_simulation_copy_snapshot(sim, 0, &mut t, q.as_mut_ptr(), 200, w.as_mut_ptr(), 200);
        assert_eq!(s, NfStatus::LengthMismatch);

        let mut report = ptr::null_mut();
        let opts = CString::new("{\"max_principle_tol\": \"x\"}").unwrap();
        assert_eq!(
            nf_simulation_report_json(sim, opts.as_ptr(), &mut report),
            NfStatus::InvalidConfig
        );
        assert!(report.is_null());
        nf_simulation_free(sim);
    }
}

#[test]
fn total_variation_counts_extensions() {
    let v = [0.0, 1.0, 0.5];
    let mut tv = 0.0;
    unsafe {
        assert_eq!(nf_total_variation(v.as_ptr(), 3, 1.0, 0.0, &mut tv), NfStatus::Ok);
        assert_eq!(tv, 1.0 + 1.0 + 0.5 + 0.5);
        assert_eq!(
            nf_total_variation(ptr::null(), 3, 0.0, 0.0, &mut tv),
            NfStatus::NullPointer
        );
        assert_eq!(
            nf_total_variation(v.as_ptr(), 1, 0.0, 0.0, &mut tv),
            NfStatus::InvalidConfig
        );
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(nf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nonlocal_flow.h"))
            .unwrap();
    for name in [
        "nf_last_error",
        "nf_version",
        "nf_simulation_new",
        "nf_simulation_free",
        "nf_simulation_run",
        "nf_simulation_cell_count",
        "nf_simulation_snapshot_count",
        "nf_simulation_copy_snapshot",
        "nf_simulation_report_json",
        "nf_string_free",
        "nf_total_variation",
        "typedef struct NfSimulation NfSimulation",
        "NF_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles the C example against the static library when a C compiler is
/// on the path.
#[test]
fn c_smoke_program() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/ sits next to the test executable's deps/ directory
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libnonlocal_flow_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(root.join("examples/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "{stdout}{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("snapshots 11"), "{stdout}");
}
