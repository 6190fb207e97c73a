//! Checks of trajectories against the structural properties of the models:
//! maximum principle, conservation, TV bounds, entropy admissibility,
//! one-sided slope bounds and convergence to the local limit.

pub mod entropy;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l1_distance, monotonicity_defect_in, total_variation, Direction};
use crate::solver::Trajectory;

pub use entropy::{
    build_entropy_pair, entropy_residual, entropy_residuals, traveling_discontinuity,
    weak_entropy_functional, EntropyKind, EntropyPair, TestFunction, TestFunctionFamily,
};
pub use report::{DiagnosticsOptions, DiagnosticsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Q,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSeries {
    pub field: Field,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `‖V'‖_∞ |q₀|_TV` over the datum range, attached for `w`.
    pub bound: Option<f64>,
}

impl TvSeries {
    /// Largest increase between consecutive entries (0 for a non-increasing series).
    pub fn max_increase(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn tv_bound(traj: &Trajectory) -> f64 {
    let q0 = &traj.initial().q;
    let (lo, hi) = q0.range();
    traj.config.velocity.max_abs_derivative(lo, hi, 4096) * total_variation(q0)
}

/// TV of `q` or `w` at each snapshot.
pub fn tv_series(traj: &Trajectory, field: Field) -> TvSeries {
    let values = traj
        .snapshots
        .iter()
        .map(|s| match field {
            Field::Q => total_variation(&s.q),
            Field::W => s.w.total_variation(),
        })
        .collect();
    TvSeries {
        field,
        times: traj.times(),
        values,
        bound: (field == Field::W).then(|| tv_bound(traj)),
    }
}

/// Same as [`tv_series`] but after every time step, from the step log.
pub fn tv_step_series(traj: &Trajectory, field: Field) -> TvSeries {
    let (times, values) = traj
        .steps
        .iter()
        .map(|s| {
            (
                s.time,
                match field {
                    Field::Q => s.tv_q,
                    Field::W => s.tv_w,
                },
            )
        })
        .unzip();
    TvSeries {
        field,
        times,
        values,
        bound: (field == Field::W).then(|| tv_bound(traj)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `∂ₓq <= C/t`
    Upper,
    /// `∂ₓq >= -C/t`
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OleinikResult {
    pub orientation: Orientation,
    pub t_min: f64,
    /// `(t, extreme one-sided slope)` for each snapshot with `t >= t_min`.
    pub slopes: Vec<(f64, f64)>,
    /// Smallest `C >= 0` consistent with every recorded slope.
    pub constant: f64,
    pub max_constant: Option<f64>,
    pub verdict: bool,
}

/// Fits the one-sided slope constant over snapshots with `t >= t_min`
/// (default `0.05 T`). The verdict requires a finite constant, no larger than
/// `max_constant` when given.
pub fn oleinik_check(
    traj: &Trajectory,
    orientation: Orientation,
    t_min: Option<f64>,
    max_constant: Option<f64>,
) -> OleinikResult {
    let t_min = t_min.unwrap_or(0.05 * traj.config.t_end);
    let dx = traj.grid().dx();
    let slopes: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .filter(|s| s.time > 0.0 && s.time >= t_min)
        .map(|s| {
            let d = s.q.values().windows(2).map(|w| (w[1] - w[0]) / dx);
            let slope = match orientation {
                Orientation::Upper => d.fold(f64::NEG_INFINITY, f64::max),
                Orientation::Lower => d.fold(f64::INFINITY, f64::min),
            };
            (s.time, slope)
        })
        .collect();
    let constant = slopes
        .iter()
        .map(|&(t, m)| match orientation {
            Orientation::Upper => m * t,
            Orientation::Lower => -m * t,
        })
        .fold(0.0, f64::max);
    let verdict = constant.is_finite() && max_constant.is_none_or(|c| constant <= c);
    OleinikResult {
        orientation,
        t_min,
        slopes,
        constant,
        max_constant,
        verdict,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eta: f64,
    pub l1_error: f64,
}

/// L¹ distance of each run to `reference` at `time` over `window`, sorted by
/// `η` descending. The reference is averaged onto each run's grid first.
pub fn convergence_table(
    runs: &[(f64, &Trajectory)],
    reference: &Trajectory,
    window: (f64, f64),
    time: f64,
) -> Result<Vec<ConvergenceRow>> {
    let r = &reference.at(time)?.q;
    let mut rows = runs
        .iter()
        .map(|&(eta, traj)| {
            let q = &traj.at(time)?.q;
            let target = if q.grid() == r.grid() {
                r.clone()
            } else {
                r.coarsen(q.grid())?
            };
            Ok(ConvergenceRow {
                eta,
                l1_error: l1_distance(q, &target, window)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.eta.total_cmp(&a.eta));
    Ok(rows)
}

/// Errors strictly decrease down the table (vacuous for fewer than two rows).
pub fn strictly_decreasing(rows: &[ConvergenceRow]) -> bool {
    rows.windows(2).all(|w| w[1].l1_error < w[0].l1_error)
}

/// `(t, monotonicity defect over window)` for each snapshot.
pub fn monotonicity_series(
    traj: &Trajectory,
    direction: Direction,
    window: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    if !(window.0 < window.1) {
        return Err(Error::InvalidInterval {
            lo: window.0,
            hi: window.1,
        });
    }
    Ok(traj
        .snapshots
        .iter()
        .map(|s| (s.time, monotonicity_defect_in(&s.q, direction, window)))
        .collect())
}
