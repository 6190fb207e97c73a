//! Config-driven experiment runner behind the `nonlocal-flow` binary.
//!
//! Independent runs execute on a rayon pool of `jobs` threads. Each output
//! file is written to a temporary sibling and renamed into place, and the
//! aggregate tables are assembled after every run has finished.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    CompareSpec, ConfigError, ConvergeSpec, ExperimentConfig, RunSpec, CONFIG_VERSION, DEFAULT_SNAPSHOTS,
};

use crate::diagnostics::report::Verdict;
use crate::diagnostics::{
    convergence_table, monotonicity_series, strictly_decreasing, DiagnosticsOptions, DiagnosticsReport,
};
use crate::solver::{simulate, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run '{label}' failed: {source}")]
    Run { label: String, source: crate::Error },
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Exit status for a finished command: 0 when every verdict passed.
pub fn exit_code(result: &Result<bool, CommandError>) -> i32 {
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => e.exit_code(),
    }
}

pub struct RunOutput {
    pub spec: RunSpec,
    pub trajectory: Trajectory,
    pub report: DiagnosticsReport,
    pub runtime_s: f64,
}

/// Contents of `<label>/report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub run: RunSpec,
    pub steps: usize,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub diagnostics: DiagnosticsReport,
}

pub fn execute(
    spec: &RunSpec,
    extra_times: &[f64],
    opts: &DiagnosticsOptions,
) -> Result<RunOutput, CommandError> {
    let wrap = |source| CommandError::Run {
        label: spec.label.clone(),
        source,
    };
    let start = Instant::now();
    let trajectory = simulate(&spec.solver_config(extra_times), &spec.datum).map_err(wrap)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let report = DiagnosticsReport::evaluate(&trajectory, opts).map_err(wrap)?;
    log::info!(
        "{}: {} steps in {:.3}s, passed = {}",
        spec.label,
        trajectory.steps.len().saturating_sub(1),
        runtime_s,
        report.passed()
    );
    Ok(RunOutput {
        spec: spec.clone(),
        trajectory,
        report,
        runtime_s,
    })
}

/// Runs every job on a pool of `jobs` threads; results keep the input order.
pub fn execute_all(
    jobs: &[(RunSpec, Vec<f64>, DiagnosticsOptions)],
    threads: usize,
) -> Vec<Result<RunOutput, CommandError>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|(spec, extra, opts)| execute(spec, extra, opts))
            .collect()
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CommandError> {
    let wrap = |source| CommandError::Output {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(wrap)?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(wrap)?;
        w.flush().map_err(wrap)?;
    }
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn write_run(out: &Path, run: &RunOutput) -> Result<(), CommandError> {
    let dir = out.join(&run.spec.label);
    write_atomic(&dir.join("trajectory.csv"), |w| run.trajectory.write_long_csv(w))?;
    write_atomic(&dir.join("heatmap.csv"), |w| run.trajectory.write_heatmap_csv(w))?;
    write_atomic(&dir.join("report.csv"), |w| run.report.write_csv(w))?;
    let summary = RunSummary {
        label: run.spec.label.clone(),
        run: run.spec.clone(),
        steps: run.trajectory.steps.len().saturating_sub(1),
        passed: run.report.passed(),
        verdicts: run.report.verdicts(),
        diagnostics: run.report.clone(),
    };
    write_atomic(&dir.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })
}

/// Splits results into outputs and the first failure, logging every failure.
fn collect(results: Vec<Result<RunOutput, CommandError>>) -> (Vec<RunOutput>, Option<CommandError>) {
    let mut ok = vec![];
    let mut first = None;
    for r in results {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => {
                log::error!("{e}");
                first.get_or_insert(e);
            }
        }
    }
    (ok, first)
}

/// Runs every spec and writes its trajectory, heatmap and report. Returns
/// whether all enabled verdicts passed.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<bool, CommandError> {
    let jobs: Vec<_> = cfg
        .runs
        .iter()
        .map(|r| (r.clone(), vec![], cfg.options_for(r)))
        .collect();
    let (outputs, failure) = collect(execute_all(&jobs, threads));
    for o in &outputs {
        write_run(out, o)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(outputs.iter().all(|o| o.report.passed())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLine {
    pub eta: f64,
    pub l1_error: f64,
    pub tv_w_max: f64,
    pub runtime_s: f64,
}

/// Reruns the base spec at every reach and tabulates its L¹ distance to the
/// reference. Returns whether the errors strictly decrease with `η`.
pub fn cmd_converge(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<bool, CommandError> {
    let c = cfg
        .converge
        .as_ref()
        .ok_or_else(|| ConfigError("config has no converge section".into()))?;
    let base = cfg.run(&c.base)?;
    let reference = cfg.run(&c.reference)?;
    let mut jobs = vec![(reference.clone(), vec![c.time], cfg.options_for(reference))];
    for &eta in &c.etas {
        jobs.push((base.with_eta(eta)?, vec![c.time], cfg.options_for(base)));
    }
    let (outputs, failure) = collect(execute_all(&jobs, threads));
    if let Some(e) = failure {
        return Err(e);
    }
    let (reference_run, ladder) = outputs.split_first().expect("reference job");
    let window = c.window.unwrap_or((base.grid.x_min(), base.grid.x_max()));
    let runs: Vec<_> = c
        .etas
        .iter()
        .copied()
        .zip(ladder.iter().map(|o| &o.trajectory))
        .collect();
    let rows = convergence_table(&runs, &reference_run.trajectory, window, c.time).map_err(|source| {
        CommandError::Run {
            label: c.base.clone(),
            source,
        }
    })?;
    let lines: Vec<ConvergenceLine> = rows
        .iter()
        .map(|row| {
            let o = c
                .etas
                .iter()
                .position(|&e| e == row.eta)
                .map(|i| &ladder[i])
                .expect("row from ladder");
            ConvergenceLine {
                eta: row.eta,
                l1_error: row.l1_error,
                tv_w_max: o.trajectory.steps.iter().map(|s| s.tv_w).fold(0.0, f64::max),
                runtime_s: o.runtime_s,
            }
        })
        .collect();
    write_atomic(&out.join("convergence.csv"), |w| {
        writeln!(w, "eta,l1_error,tv_w_max,runtime_s")?;
        for l in &lines {
            writeln!(w, "{},{},{},{}", l.eta, l.l1_error, l.tv_w_max, l.runtime_s)?;
        }
        Ok(())
    })?;
    let decreasing = strictly_decreasing(&rows);
    if !decreasing {
        log::warn!("L1 errors do not strictly decrease with eta");
    }
    Ok(decreasing)
}

/// Writes `slices.csv` (one column per label at the slice time) and
/// `monotonicity.csv` (defect history per label).
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<bool, CommandError> {
    let c = cfg
        .compare
        .as_ref()
        .ok_or_else(|| ConfigError("config has no compare section".into()))?;
    let jobs = c
        .labels
        .iter()
        .map(|l| {
            let r = cfg.run(l)?;
            Ok((r.clone(), vec![c.time], cfg.options_for(r)))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let (outputs, failure) = collect(execute_all(&jobs, threads));
    if let Some(e) = failure {
        return Err(e);
    }
    let wrap = |label: &str| {
        let label = label.to_string();
        move |source| CommandError::Run { label, source }
    };
    let grid = *outputs[0].trajectory.grid();
    let window = c.window.unwrap_or((grid.x_min(), grid.x_max()));
    let mut slices = vec![];
    let mut series = vec![];
    for o in &outputs {
        let label = &o.spec.label;
        slices.push(o.trajectory.at(c.time).map_err(wrap(label))?.q.values().to_vec());
        series.push(monotonicity_series(&o.trajectory, c.direction, window).map_err(wrap(label))?);
    }
    write_atomic(&out.join("slices.csv"), |w| {
        write!(w, "x")?;
        for l in &c.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for (j, x) in grid.centers().enumerate() {
            write!(w, "{x}")?;
            for s in &slices {
                write!(w, ",{}", s[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_atomic(&out.join("monotonicity.csv"), |w| {
        writeln!(w, "label,t,defect")?;
        for (l, s) in c.labels.iter().zip(&series) {
            for (t, d) in s {
                writeln!(w, "{l},{t},{d}")?;
            }
        }
        Ok(())
    })?;
    Ok(true)
}
