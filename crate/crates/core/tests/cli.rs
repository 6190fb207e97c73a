use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-flow"))
}

fn run(sub: &str, cfg: &Value, out: &Path, extra: &[&str]) -> Output {
    fs::create_dir_all(out).unwrap();
    let path = out.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    bin()
        .arg(sub)
        .arg(&path)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn run_spec(label: &str, variant: &str, velocity: &str, datum: Value, n: usize) -> Value {
    json!({
        "label": label,
        "variant": variant,
        "kernel": {"family": "exponential", "eta": 0.1},
        "velocity": {"family": velocity},
        "datum": datum,
        "grid": {"x_min": -2.0, "x_max": 2.0, "n_cells": n},
        "t_end": 0.5,
    })
}

fn boxed() -> Value {
    json!({"family": "box", "base": 0.25, "height": 0.5, "a": -0.5, "b": 0.5})
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn constant_datum_stays_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "runs": [run_spec("flat", "nonlocal_velocity", "quadratic", json!({"family": "constant", "value": 0.4}), 100)],
    });
    let out = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&dir.path().join("flat/trajectory.csv"));
    assert_eq!(header, ["t", "x", "q", "w"]);
    assert_eq!(rows.len(), 11 * 100);
    for r in &rows {
        assert!((r[2] - 0.4).abs() < 1e-14, "{}", r[2]);
    }
    let (header, rows) = read_csv(&dir.path().join("flat/heatmap.csv"));
    assert_eq!(header.len(), 101);
    assert_eq!(rows.len(), 11);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("flat/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["label"], "flat");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = run_spec("a", "nonlocal_velocity", "quadratic", boxed(), 100);
    bad["cfl"] = json!(0.9);
    let out = run("simulate", &json!({"version": 1, "runs": [bad]}), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cfl"));
    assert!(!dir.path().join("a").exists());

    let path = dir.path().join("broken.json");
    fs::write(&path, "{ not json").unwrap();
    let out = bin().arg("simulate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .arg("simulate")
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // converge without a converge section
    let ok = json!({"version": 1, "runs": [run_spec("a", "nonlocal_velocity", "quadratic", boxed(), 100)]});
    assert_eq!(run("converge", &ok, dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run("compare", &ok, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn failed_verdict_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "runs": [run_spec("a", "nonlocal_velocity", "quadratic", boxed(), 100)],
        "diagnostics": {"max_principle_tol": -1.0},
    });
    let out = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    // outputs are still written
    assert!(dir.path().join("a/report.json").exists());
}

#[test]
fn reruns_are_bit_identical() {
    let runs: Vec<Value> = [
        ("velocity", "nonlocal_velocity"),
        ("solution", "nonlocal_solution"),
        ("local", "local"),
    ]
    .iter()
    .map(|(l, v)| run_spec(l, v, "quadratic", boxed(), 200))
    .collect();
    let cfg = json!({"version": 1, "runs": runs, "diagnostics": {"entropy": true, "tv_decay": true}});
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(
        run("simulate", &cfg, a.path(), &["--jobs", "1"]).status.code(),
        Some(0)
    );
    assert_eq!(
        run("simulate", &cfg, b.path(), &["--jobs", "3"]).status.code(),
        Some(0)
    );
    for label in ["velocity", "solution", "local"] {
        for file in ["trajectory.csv", "heatmap.csv", "report.json", "report.csv"] {
            let p = PathBuf::from(label).join(file);
            assert_eq!(
                fs::read(a.path().join(&p)).unwrap(),
                fs::read(b.path().join(&p)).unwrap(),
                "{}",
                p.display()
            );
        }
    }
}

fn ladder(etas: &[f64]) -> Value {
    json!({
        "version": 1,
        "runs": [
            run_spec("base", "nonlocal_velocity", "quadratic", boxed(), 400),
            run_spec("reference", "local", "quadratic", boxed(), 1600),
        ],
        "converge": {"base": "base", "etas": etas, "reference": "reference", "time": 0.5},
    })
}

#[test]
fn converge_writes_decreasing_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("converge", &ladder(&[0.001, 0.1, 0.01]), dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&dir.path().join("convergence.csv"));
    assert_eq!(header, ["eta", "l1_error", "tv_w_max", "runtime_s"]);
    let etas: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(etas, [0.1, 0.01, 0.001]);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    for r in &rows {
        assert!(r[2] > 0.0 && r[2] <= 1.0 + 1e-9);
        assert!(r[3] >= 0.0);
    }
}

#[test]
fn converge_single_rung() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("converge", &ladder(&[0.05]), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.path().join("convergence.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn compare_linear_velocity_columns_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "runs": [
            run_spec("velocity", "nonlocal_velocity", "linear", boxed(), 400),
            run_spec("solution", "nonlocal_solution", "linear", boxed(), 400),
        ],
        "compare": {"labels": ["velocity", "solution"], "time": 0.5},
    });
    let out = run("compare", &cfg, dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&dir.path().join("slices.csv"));
    assert_eq!(header, ["x", "velocity", "solution"]);
    assert_eq!(rows.len(), 400);
    for r in &rows {
        assert!((r[1] - r[2]).abs() <= 1e-12);
    }
    let text = fs::read_to_string(dir.path().join("monotonicity.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("label,t,defect"));
    assert_eq!(lines.count(), 2 * 11);
}

#[test]
fn compare_single_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "version": 1,
        "runs": [run_spec("only", "nonlocal_solution", "quadratic", boxed(), 200)],
        "compare": {"labels": ["only"], "time": 0.25, "window": [0.0, 2.0]},
    });
    let out = run("compare", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = read_csv(&dir.path().join("slices.csv"));
    assert_eq!(header, ["x", "only"]);
    assert_eq!(rows.len(), 200);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = nonlocal_flow::experiment::ExperimentConfig::load(&path);
        assert!(cfg.is_ok(), "{}: {:?}", path.display(), cfg.err());
        count += 1;
    }
    assert!(count >= 6);
}
