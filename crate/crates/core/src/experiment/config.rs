use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsOptions;
use crate::grid::{Direction, GridSpec};
use crate::models::{check_velocity_conditions, InitialDatum, KernelSpec, VelocityModel};
use crate::solver::{SolverConfig, Variant, DEFAULT_CFL};

pub const CONFIG_VERSION: u32 = 1;

/// Snapshot count used when a run lists no explicit times.
pub const DEFAULT_SNAPSHOTS: usize = 11;

/// Problems detected before any simulation starts.
#[derive(Debug, thiserror::Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub label: String,
    pub variant: Variant,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub velocity: VelocityModel,
    pub datum: InitialDatum,
    pub grid: GridSpec,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Overrides the experiment-wide toggles for this run.
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsOptions>,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

impl RunSpec {
    /// Solver configuration, with `extra` times merged into the snapshot list.
    pub fn solver_config(&self, extra: &[f64]) -> SolverConfig {
        let cfg = SolverConfig::new(
            self.variant,
            self.kernel.clone(),
            self.velocity.clone(),
            self.grid,
            self.t_end,
        )
        .with_cfl(self.cfl);
        let cfg = if self.snapshot_times.is_empty() {
            cfg.with_uniform_snapshots(DEFAULT_SNAPSHOTS)
        } else {
            cfg.with_snapshots(self.snapshot_times.clone())
        };
        let mut times = cfg.snapshot_times.clone();
        for &t in extra {
            if !times
                .iter()
                .any(|&s| (s - t).abs() <= 1e-12 * self.t_end.max(1.0))
            {
                times.push(t);
            }
        }
        times.sort_by(f64::total_cmp);
        cfg.with_snapshots(times)
    }

    /// Same run with the kernel reach replaced by `eta`.
    pub fn with_eta(&self, eta: f64) -> Result<RunSpec, ConfigError> {
        let kernel = self
            .kernel
            .as_ref()
            .ok_or_else(|| cfg_err(format!("run '{}' has no kernel to rescale", self.label)))?
            .with_eta(eta)
            .map_err(|e| cfg_err(format!("eta {eta}: {e}")))?;
        Ok(RunSpec {
            label: format!("{}_eta{eta}", self.label),
            kernel: Some(kernel),
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ctx = |e: crate::Error| cfg_err(format!("run '{}': {e}", self.label));
        self.solver_config(&[]).validate().map_err(ctx)?;
        self.datum.validate().map_err(ctx)?;
        if self.variant != Variant::Local {
            let (lo, hi) = self.datum.range();
            let report = check_velocity_conditions(&self.velocity, lo, hi, 1024).map_err(ctx)?;
            if !report.velocity_admissible {
                return Err(cfg_err(format!(
                    "run '{}': V must be nonincreasing and nonnegative on [{lo}, {hi}]",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Singular-limit ladder: `base` rerun at every `eta`, measured against
/// `reference` at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSpec {
    pub base: String,
    pub etas: Vec<f64>,
    pub reference: String,
    pub time: f64,
    /// Defaults to the whole mesh.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

/// Overlay of several runs at one time, plus their monotonicity histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub labels: Vec<String>,
    pub time: f64,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

fn default_direction() -> Direction {
    Direction::Decreasing
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub converge: Option<ConvergeSpec>,
    #[serde(default)]
    pub compare: Option<CompareSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn run(&self, label: &str) -> Result<&RunSpec, ConfigError> {
        self.runs
            .iter()
            .find(|r| r.label == label)
            .ok_or_else(|| cfg_err(format!("unknown run label '{label}'")))
    }

    pub fn options_for(&self, run: &RunSpec) -> DiagnosticsOptions {
        run.diagnostics
            .clone()
            .unwrap_or_else(|| self.diagnostics.clone())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(cfg_err(format!(
                "unsupported version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.runs.is_empty() {
            return Err(cfg_err("no runs"));
        }
        let mut seen = HashSet::new();
        for r in &self.runs {
            if r.label.is_empty()
                || !r
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                || r.label.starts_with('.')
            {
                return Err(cfg_err(format!(
                    "label '{}' must be nonempty [A-Za-z0-9._-] not starting with '.'",
                    r.label
                )));
            }
            if !seen.insert(r.label.as_str()) {
                return Err(cfg_err(format!("duplicate label '{}'", r.label)));
            }
            r.validate()?;
        }
        if let Some(c) = &self.converge {
            let base = self.run(&c.base)?;
            let reference = self.run(&c.reference)?;
            if !matches!(
                base.variant,
                Variant::NonlocalVelocity | Variant::NonlocalSolution
            ) {
                return Err(cfg_err("converge base must be a nonlocal run"));
            }
            if c.etas.is_empty() {
                return Err(cfg_err("converge needs at least one eta"));
            }
            let mut sorted = c.etas.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(cfg_err("converge etas must be distinct"));
            }
            for &eta in &c.etas {
                base.with_eta(eta)?.validate()?;
            }
            if base.grid.refinement_ratio(&reference.grid).is_none() {
                return Err(cfg_err("reference grid must refine the base grid"));
            }
            check_time(c.time, &[base, reference])?;
            check_window(c.window)?;
        }
        if let Some(c) = &self.compare {
            if c.labels.is_empty() {
                return Err(cfg_err("compare needs at least one label"));
            }
            let runs = c
                .labels
                .iter()
                .map(|l| self.run(l))
                .collect::<Result<Vec<_>, _>>()?;
            if runs.iter().any(|r| r.grid != runs[0].grid) {
                return Err(cfg_err("compared runs must share one grid"));
            }
            check_time(c.time, &runs)?;
            check_window(c.window)?;
        }
        Ok(())
    }
}

fn check_time(time: f64, runs: &[&RunSpec]) -> Result<(), ConfigError> {
    for r in runs {
        if !(time >= 0.0 && time <= r.t_end) {
            return Err(cfg_err(format!(
                "time {time} lies outside [0, {}] of run '{}'",
                r.t_end, r.label
            )));
        }
    }
    Ok(())
}

fn check_window(window: Option<(f64, f64)>) -> Result<(), ConfigError> {
    match window {
        Some((a, b)) if !(a < b) => Err(cfg_err(format!("empty window [{a}, {b}]"))),
        _ => Ok(()),
    }
}
