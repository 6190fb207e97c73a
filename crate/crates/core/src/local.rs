//! Local conservation law `∂ₜq + ∂ₓ f(q) = 0`, `f(s) = s V(s)`: Godunov
//! scheme and exact Riemann solutions for strictly convex or concave fluxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::models::conditions::flux_curvature;
use crate::models::{Curvature, InitialDatum, VelocityModel};
use crate::operator::InterfaceField;
use crate::solver::{Snapshot, SolverConfig, StepRecord, Trajectory, Variant};

const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxModel {
    pub velocity: VelocityModel,
}

impl FluxModel {
    pub fn new(velocity: VelocityModel) -> Self {
        Self { velocity }
    }

    pub fn flux(&self, s: f64) -> f64 {
        s * self.velocity.value(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.velocity.value(s) + s * self.velocity.derivative(s)
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        2.0 * self.velocity.derivative(s) + s * self.velocity.second_derivative(s)
    }

    /// Sampled `max |f'|` over `[lo, hi]`.
    pub fn max_abs_speed(&self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return self.derivative(lo).abs();
        }
        (0..=1024)
            .map(|i| self.derivative(lo + (hi - lo) * i as f64 / 1024.0).abs())
            .fold(0.0, f64::max)
    }

    /// Root of `f'` in `[a, b]` when `f'` changes sign there.
    fn critical_point(&self, a: f64, b: f64) -> Option<f64> {
        let (da, db) = (self.derivative(a), self.derivative(b));
        if da * db >= 0.0 {
            return None;
        }
        Some(bisect(|s| self.derivative(s), a, b, 0.0))
    }
}

/// Solves `g(s) = target` on `[a, b]` for monotone `g` by bisection.
fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, target: f64) -> f64 {
    let sign_a = (g(a) - target).signum();
    while b - a > BISECTION_TOL {
        let m = 0.5 * (a + b);
        if (g(m) - target).signum() == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Godunov flux: `min_{[a,b]} f` when `a <= b`, `max_{[b,a]} f` otherwise.
pub fn godunov_flux(fm: &FluxModel, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut candidates = vec![fm.flux(a), fm.flux(b)];
    if let Some(c) = fm.critical_point(lo, hi) {
        candidates.push(fm.flux(c));
    }
    if a <= b {
        candidates.into_iter().fold(f64::INFINITY, f64::min)
    } else {
        candidates.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Speeds reported alongside local snapshots: `V(q_k)` of the downstream
/// cell at interface `k`, `V(q_R)` at the last interface.
fn local_speeds(fm: &FluxModel, q: &CellField) -> InterfaceField {
    let v = &fm.velocity;
    let values: Vec<f64> = q
        .values()
        .iter()
        .map(|&s| v.value(s))
        .chain(std::iter::once(v.value(q.right())))
        .collect();
    InterfaceField::new(*q.grid(), values, v.value(q.left())).expect("n + 1 values")
}

/// Godunov scheme with `dt = cfl dx / max|f'|` over the data range.
pub fn godunov_simulate(
    fm: &FluxModel,
    datum: &InitialDatum,
    grid: &GridSpec,
    cfl: f64,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let config = SolverConfig {
        variant: Variant::Local,
        kernel: None,
        velocity: fm.velocity.clone(),
        grid: *grid,
        cfl,
        t_end,
        snapshot_times: snapshot_times.to_vec(),
    };
    config.validate()?;
    let mut q = datum.rasterize(grid)?;
    let (lo, hi) = q.range();
    let dx = grid.dx();
    let speed = fm.max_abs_speed(lo, hi).max(1e-300);
    let dt_cfl = cfl * dx / speed;

    let n = grid.n_cells();
    let mut w = local_speeds(fm, &q);
    let mut t = 0.0;
    let mut outflow = 0.0;
    let mut steps = vec![StepRecord::observe(0.0, 0.0, &q, w.total_variation(), 0.0)];
    let mut snapshots = vec![Snapshot {
        time: 0.0,
        q: q.clone(),
        w: w.clone(),
    }];
    let mut fluxes = vec![0.0; n + 1];
    for target in config.schedule().into_iter().skip(1) {
        while t < target {
            let gap = target - t;
            let dt = dt_cfl.min(gap);
            let qs = q.values();
            let cell = |k: isize| -> f64 {
                if k < 0 {
                    q.left()
                } else if k as usize >= n {
                    q.right()
                } else {
                    qs[k as usize]
                }
            };
            for (k, f) in fluxes.iter_mut().enumerate() {
                *f = godunov_flux(fm, cell(k as isize - 1), cell(k as isize));
            }
            let lambda = dt / dx;
            let next: Vec<f64> = qs
                .iter()
                .enumerate()
                .map(|(j, &v)| v - lambda * (fluxes[j + 1] - fluxes[j]))
                .collect();
            t = if dt >= gap { target } else { t + dt };
            if let Some(cell) = next.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonfiniteState { time: t, cell });
            }
            outflow += dt * (fluxes[n] - fluxes[0]);
            q = q.with_values(next);
            w = local_speeds(fm, &q);
            steps.push(StepRecord::observe(t, dt, &q, w.total_variation(), outflow));
        }
        snapshots.push(Snapshot {
            time: target,
            q: q.clone(),
            w: w.clone(),
        });
    }
    Ok(Trajectory {
        config,
        snapshots,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Wave {
    Constant,
    Shock {
        speed: f64,
    },
    /// Fan between the characteristic speeds `f'(q_l)` and `f'(q_r)`.
    Rarefaction {
        head: f64,
        tail: f64,
    },
}

/// Self-similar entropy solution `q(t, x) = sample((x - x0)/t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannSolution {
    pub q_l: f64,
    pub q_r: f64,
    pub wave: Wave,
    flux: FluxModel,
}

impl RiemannSolution {
    pub fn sample(&self, xi: f64) -> f64 {
        match self.wave {
            Wave::Constant => self.q_l,
            Wave::Shock { speed } => {
                if xi < speed {
                    self.q_l
                } else {
                    self.q_r
                }
            }
            Wave::Rarefaction { head, tail } => {
                if xi <= head {
                    self.q_l
                } else if xi >= tail {
                    self.q_r
                } else {
                    let (lo, hi) = if self.q_l < self.q_r {
                        (self.q_l, self.q_r)
                    } else {
                        (self.q_r, self.q_l)
                    };
                    bisect(|s| self.flux.derivative(s), lo, hi, xi)
                }
            }
        }
    }

    /// Cell averages at time `t` for a discontinuity initially at `x0`. Constant
    /// states and shocks are averaged exactly; the part of a cell inside a fan
    /// uses `subsamples` midpoint nodes.
    pub fn cell_averages(&self, grid: &GridSpec, t: f64, x0: f64, subsamples: usize) -> Result<CellField> {
        let m = subsamples.max(1);
        // positions of the wave edges at time t
        let (lo, hi) = match self.wave {
            Wave::Constant => (x0, x0),
            Wave::Shock { speed } => (x0 + speed * t, x0 + speed * t),
            Wave::Rarefaction { head, tail } => (x0 + head * t, x0 + tail * t),
        };
        let values = (0..grid.n_cells())
            .map(|j| {
                let (a, b) = (grid.interface(j), grid.interface(j + 1));
                let left = (lo.min(b) - a).max(0.0);
                let right = (b - hi.max(a)).max(0.0);
                let mut total = left * self.q_l + right * self.q_r;
                let (fa, fb) = (lo.max(a), hi.min(b));
                if fb > fa {
                    let h = (fb - fa) / m as f64;
                    total += (0..m)
                        .map(|i| self.sample((fa + h * (i as f64 + 0.5) - x0) / t))
                        .sum::<f64>()
                        * h;
                }
                total / (b - a)
            })
            .collect();
        CellField::new(*grid, values, (self.q_l, self.q_r))
    }
}

/// Exact Riemann solution; needs a strictly convex or concave flux between
/// the two states.
pub fn exact_riemann(fm: &FluxModel, q_l: f64, q_r: f64) -> Result<RiemannSolution> {
    let build = |wave| RiemannSolution {
        q_l,
        q_r,
        wave,
        flux: fm.clone(),
    };
    if q_l == q_r {
        return Ok(build(Wave::Constant));
    }
    let (lo, hi) = (q_l.min(q_r), q_l.max(q_r));
    let shock = match flux_curvature(&fm.velocity, lo, hi, 1000) {
        Curvature::StrictlyConcave => q_l < q_r,
        Curvature::StrictlyConvex => q_l > q_r,
        Curvature::Neither => return Err(Error::FluxNotGenuinelyNonlinear { lo, hi }),
    };
    let wave = if shock {
        Wave::Shock {
            speed: (fm.flux(q_r) - fm.flux(q_l)) / (q_r - q_l),
        }
    } else {
        Wave::Rarefaction {
            head: fm.derivative(q_l),
            tail: fm.derivative(q_r),
        }
    };
    Ok(build(wave))
}
