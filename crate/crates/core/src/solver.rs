//! Conservative upwind time stepping for the two nonlocal models.
//!
//! Both models share the flux `q · u` at each interface, where the speed `u`
//! is either `W = γ ⋆ V(q)` (nonlocal in velocity) or `V(γ ⋆ q)` (nonlocal in
//! solution). Speeds are nonnegative, so the upwind cell is always the left
//! one:
//!
//! ```text
//! F_0 = q_L u_0,   F_k = q_{k-1} u_k,   q_j ← q_j − dt/dx (F_{j+1} − F_j).
//! ```
//!
//! The time step accounts for both the transport speed and the sensitivity of
//! the interface speed to the upwind cell, `dt (max|u| + w_0 max|q| max|V'|) <= cfl dx`,
//! where `w_0` is the kernel mass of the nearest downstream cell. Under
//! `cfl <= 1/2` this keeps the update inside the data range and preserves
//! monotone profiles.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::local::{godunov_simulate, FluxModel};
use crate::models::{InitialDatum, KernelSpec, VelocityModel};
use crate::operator::{
    nonlocal_solution_velocity, nonlocal_velocity, nonlocal_velocity_exponential_scan, CellWeights,
    InterfaceField,
};

pub const DEFAULT_CFL: f64 = 0.5;

/// Smallest speed used in the CFL quotient.
const SPEED_FLOOR: f64 = 1e-300;

/// Interface speeds below `-NEGATIVE_SPEED_TOL` break the upwind direction.
const NEGATIVE_SPEED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `∂ₜq + ∂ₓ((γ ⋆ V(q)) q) = 0`
    NonlocalVelocity,
    /// `∂ₜq + ∂ₓ(V(γ ⋆ q) q) = 0`
    NonlocalSolution,
    /// `∂ₜq + ∂ₓ(V(q) q) = 0`
    Local,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::NonlocalVelocity => "nonlocal_velocity",
            Variant::NonlocalSolution => "nonlocal_solution",
            Variant::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Required by the nonlocal variants; ignored by `Local`.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub velocity: VelocityModel,
    pub grid: GridSpec,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

impl SolverConfig {
    pub fn new(
        variant: Variant,
        kernel: Option<KernelSpec>,
        velocity: VelocityModel,
        grid: GridSpec,
        t_end: f64,
    ) -> Self {
        Self {
            variant,
            kernel,
            velocity,
            grid,
            cfl: DEFAULT_CFL,
            t_end,
            snapshot_times: vec![],
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    /// `count` equispaced snapshots on `[0, t_end]`.
    pub fn with_uniform_snapshots(self, count: usize) -> Self {
        let t_end = self.t_end;
        let n = count.max(2);
        let times = (0..n)
            .map(|i| {
                if i == n - 1 {
                    t_end
                } else {
                    t_end * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        self.with_snapshots(times)
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "cfl must lie in (0, 0.5], got {}",
                self.cfl
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.t_end).contains(&t))
        {
            return Err(Error::InvalidConfig(
                "snapshot times must lie in [0, t_end]".into(),
            ));
        }
        self.velocity.validate()?;
        if self.variant != Variant::Local {
            match &self.kernel {
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "variant {} needs a kernel",
                        self.variant.name()
                    )))
                }
                Some(k) if !k.is_normalized() => {
                    return Err(Error::KernelNotNormalized { mass: k.total_mass() })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Snapshot schedule with `0` and `t_end` always present.
    pub(crate) fn schedule(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.snapshot_times.clone();
        times.push(0.0);
        times.push(self.t_end);
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub q: CellField,
    /// Interface speeds consistent with `q`.
    pub w: InterfaceField,
}

/// Per-step record of the state after the step (step 0 is the initial state).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub dt: f64,
    pub min: f64,
    pub max: f64,
    pub mass: f64,
    /// Accumulated `∫ (F_right − F_left) dt` through the mesh boundary.
    pub outflow: f64,
    pub tv_q: f64,
    pub tv_w: f64,
    pub defect_increasing: f64,
    pub defect_decreasing: f64,
}

impl StepRecord {
    /// One fused sweep over `q`; the step loop is memory-bound on large grids.
    pub(crate) fn observe(time: f64, dt: f64, q: &CellField, tv_w: f64, outflow: f64) -> Self {
        let vals = q.values();
        let (mut min, mut max, mut sum, mut tv) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
        let (mut inc, mut dec) = (0.0f64, 0.0f64);
        let mut prev = vals[0];
        for &v in vals {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            let d = v - prev;
            tv += d.abs();
            inc = inc.max(-d);
            dec = dec.max(d);
            prev = v;
        }
        tv += (vals[0] - q.left()).abs() + (q.right() - prev).abs();
        Self {
            time,
            dt,
            min,
            max,
            mass: sum * q.grid().dx(),
            outflow,
            tv_q: tv,
            tv_w,
            defect_increasing: inc,
            defect_decreasing: dec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Wraps externally built snapshots (no step log).
    pub fn from_snapshots(config: SolverConfig, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() || snapshots[0].time != 0.0 {
            return Err(Error::InvalidConfig("first snapshot must be at t = 0".into()));
        }
        if snapshots.windows(2).any(|w| !(w[0].time < w[1].time)) {
            return Err(Error::InvalidConfig(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        if snapshots.iter().any(|s| s.q.grid() != &config.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            config,
            snapshots,
            steps: vec![],
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }

    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().unwrap()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Snapshot at `time`, matched to a relative tolerance of 1e-12.
    pub fn at(&self, time: f64) -> Result<&Snapshot> {
        let tol = 1e-12 * self.config.t_end.max(1.0);
        self.snapshots
            .iter()
            .find(|s| (s.time - time).abs() <= tol)
            .ok_or(Error::SnapshotMissing { time })
    }

    /// `(time, mass, accumulated outflow)` after every step.
    pub fn mass_ledger(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.steps.iter().map(|s| (s.time, s.mass, s.outflow))
    }

    /// Largest `|mass(t) + outflow(t) − mass(0)|` over the run.
    pub fn conservation_error(&self) -> f64 {
        let Some(first) = self.steps.first() else {
            return 0.0;
        };
        self.steps
            .iter()
            .map(|s| (s.mass + s.outflow - first.mass).abs())
            .fold(0.0, f64::max)
    }

    /// Long format `t,x,q,w`; `w` is the speed at the cell's upstream interface.
    pub fn write_long_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,q,w")?;
        for s in &self.snapshots {
            let grid = s.q.grid();
            for (j, (q, w)) in s.q.values().iter().zip(s.w.values()).enumerate() {
                writeln!(out, "{},{},{},{}", s.time, grid.center(j), q, w)?;
            }
        }
        Ok(())
    }

    /// Matrix with one row per snapshot and one column per cell center; the
    /// header row holds the centers.
    pub fn write_heatmap_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for x in self.grid().centers() {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
        for s in &self.snapshots {
            write!(out, "{}", s.time)?;
            for q in s.q.values() {
                write!(out, ",{q}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Time step from the CFL restriction
/// `dt (max|W| + coupling · max|q|) = cfl dx`, capped at `max_dt` (the gap to
/// the next snapshot).
pub fn cfl_dt(q: &CellField, w: &InterfaceField, cfl: f64, dx: f64, coupling: f64, max_dt: f64) -> f64 {
    let q_max = q.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let speed = (w.max_abs() + coupling * q_max).max(SPEED_FLOOR);
    (cfl * dx / speed).min(max_dt)
}

/// Interface-speed evaluation for one nonlocal variant.
#[derive(Debug, Clone)]
pub struct NonlocalModel {
    variant: Variant,
    kernel: KernelSpec,
    velocity: VelocityModel,
}

impl NonlocalModel {
    pub fn new(variant: Variant, kernel: KernelSpec, velocity: VelocityModel) -> Result<Self> {
        if variant == Variant::Local {
            return Err(Error::InvalidConfig("local variant has no nonlocal speed".into()));
        }
        Ok(Self {
            variant,
            kernel,
            velocity,
        })
    }

    pub fn speeds(&self, q: &CellField) -> Result<InterfaceField> {
        match self.variant {
            Variant::NonlocalVelocity if self.kernel.is_exponential() => {
                nonlocal_velocity_exponential_scan(q, &self.kernel, &self.velocity)
            }
            Variant::NonlocalVelocity => nonlocal_velocity(q, &self.kernel, &self.velocity),
            Variant::NonlocalSolution => nonlocal_solution_velocity(q, &self.kernel, &self.velocity),
            Variant::Local => unreachable!(),
        }
    }

    /// `w_0 · max|V'|` over `[lo, hi]`: sensitivity of an interface speed to
    /// its nearest downstream cell.
    pub fn coupling(&self, dx: f64, lo: f64, hi: f64) -> f64 {
        let near = CellWeights::new(&self.kernel, dx, 1).near_field();
        near * self.velocity.max_abs_derivative(lo, hi, 1024)
    }
}

/// Boundary fluxes `(F_left, F_right)` of one conservative update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFlux {
    pub left: f64,
    pub right: f64,
}

/// Upwind update of `q` with precomputed interface speeds `w`.
pub fn upwind_update(q: &CellField, w: &InterfaceField, dt: f64) -> Result<(CellField, BoundaryFlux)> {
    let grid = q.grid();
    if w.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let dx = grid.dx();
    let ws = w.values();
    let (max, min) = ws.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| {
        (hi.max(s.abs()), lo.min(s))
    });
    let courant = dt * max / dx;
    if courant > 1.0 {
        return Err(Error::UnstableStep { courant });
    }
    if min < -NEGATIVE_SPEED_TOL {
        let k = ws.iter().position(|&s| s < -NEGATIVE_SPEED_TOL).unwrap();
        return Err(Error::NegativeSpeed {
            interface: k,
            speed: ws[k],
        });
    }
    let qs = q.values();
    let n = qs.len();
    let lambda = dt / dx;
    let flux = |k: usize| -> f64 {
        let upwind = if k == 0 { q.left() } else { qs[k - 1] };
        upwind * ws[k]
    };
    let mut next = Vec::with_capacity(n);
    let mut f_left = flux(0);
    let first = f_left;
    for (j, &qj) in qs.iter().enumerate() {
        let f_right = flux(j + 1);
        next.push(qj - lambda * (f_right - f_left));
        f_left = f_right;
    }
    Ok((
        q.with_values(next),
        BoundaryFlux {
            left: first,
            right: f_left,
        },
    ))
}

/// One explicit step of the given nonlocal variant.
pub fn step(
    q: &CellField,
    variant: Variant,
    kernel: &KernelSpec,
    v: &VelocityModel,
    dt: f64,
) -> Result<CellField> {
    let model = NonlocalModel::new(variant, kernel.clone(), v.clone())?;
    let w = model.speeds(q)?;
    Ok(upwind_update(q, &w, dt)?.0)
}

fn check_finite(q: &CellField, record: &StepRecord) -> Result<()> {
    if record.mass.is_finite() {
        return Ok(());
    }
    let cell = q.values().iter().position(|v| !v.is_finite()).unwrap_or(0);
    Err(Error::NonfiniteState {
        time: record.time,
        cell,
    })
}

/// Runs `config` from `datum`, recording the requested snapshots and a step
/// log.
pub fn simulate(config: &SolverConfig, datum: &InitialDatum) -> Result<Trajectory> {
    config.validate()?;
    if config.variant == Variant::Local {
        let fm = FluxModel::new(config.velocity.clone());
        let mut traj = godunov_simulate(
            &fm,
            datum,
            &config.grid,
            config.cfl,
            config.t_end,
            &config.snapshot_times,
        )?;
        traj.config.kernel = config.kernel.clone();
        return Ok(traj);
    }
    let kernel = config.kernel.clone().expect("validated");
    let model = NonlocalModel::new(config.variant, kernel, config.velocity.clone())?;
    let q0 = datum.rasterize(&config.grid)?;
    let (lo, hi) = q0.range();
    let admissible = crate::models::check_velocity_conditions(&config.velocity, lo, hi, 1024)?;
    if !admissible.velocity_admissible {
        return Err(Error::InvalidVelocity(format!(
            "V must be nonincreasing and nonnegative on the data range [{lo}, {hi}]"
        )));
    }
    let dx = config.grid.dx();
    let coupling = model.coupling(dx, lo, hi);

    let mut q = q0;
    let mut w = model.speeds(&q)?;
    let mut t = 0.0;
    let mut outflow = 0.0;
    let mut steps = vec![StepRecord::observe(0.0, 0.0, &q, w.total_variation(), 0.0)];
    let mut snapshots = vec![Snapshot {
        time: 0.0,
        q: q.clone(),
        w: w.clone(),
    }];
    for target in config.schedule().into_iter().skip(1) {
        while t < target {
            let gap = target - t;
            let dt = cfl_dt(&q, &w, config.cfl, dx, coupling, gap);
            let (next, bf) = upwind_update(&q, &w, dt)?;
            t = if dt >= gap { target } else { t + dt };
            outflow += dt * (bf.right - bf.left);
            let record = StepRecord::observe(t, dt, &next, 0.0, outflow);
            check_finite(&next, &record)?;
            q = next;
            w = model.speeds(&q)?;
            steps.push(StepRecord {
                tv_w: w.total_variation(),
                ..record
            });
        }
        snapshots.push(Snapshot {
            time: target,
            q: q.clone(),
            w: w.clone(),
        });
    }
    Ok(Trajectory {
        config: config.clone(),
        snapshots,
        steps,
    })
}
