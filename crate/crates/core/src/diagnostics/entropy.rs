//! Entropy-entropy-flux pairs and the weak entropy residual
//!
//! ```text
//! EF[φ] = ∫∫ α(q) ∂ₜφ + β(q) ∂ₓφ dx dt + ∫ α(q₀) φ(0, ·) dx
//! ```
//!
//! which is nonnegative for entropy solutions and every nonnegative test
//! function `φ`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::models::VelocityModel;
use crate::operator::InterfaceField;
use crate::solver::{Snapshot, SolverConfig, Trajectory, Variant};

pub const MIN_NODES: usize = 2048;

// 4-point Gauss-Legendre rule on [0, 1]
const GAUSS_X: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GAUSS_W: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// A user-supplied `α''`.
#[derive(Clone)]
pub struct SecondDerivative(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for SecondDerivative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecondDerivative(..)")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyKind {
    /// `α''(s) = -V'(s)/s`
    Tailored,
    /// `α''` a cosine-bump approximation of `2δ_k` of half-width `eps`, so
    /// that `α ≈ |s - k|` up to affine terms.
    KruzkovSmoothed { k: f64, eps: f64 },
    #[serde(skip)]
    Custom(SecondDerivative),
}

impl EntropyKind {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(SecondDerivative(Arc::new(f)))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Tailored => "tailored",
            Self::KruzkovSmoothed { .. } => "kruzkov_smoothed",
            Self::Custom(_) => "custom",
        }
    }
}

/// Tabulated `(α, β)` with `α(q_lo) = α'(q_lo) = β(q_lo) = 0` and
/// `β' = α' (V + s V')`, interpolated by cubic Hermite polynomials.
#[derive(Debug, Clone)]
pub struct EntropyPair {
    kind: EntropyKind,
    q_lo: f64,
    q_hi: f64,
    h: f64,
    alpha: Vec<f64>,
    alpha_prime: Vec<f64>,
    alpha_second: Vec<f64>,
    beta: Vec<f64>,
    beta_prime: Vec<f64>,
}

fn bump_density(u: f64, eps: f64) -> f64 {
    if u.abs() >= eps {
        0.0
    } else {
        (1.0 + (std::f64::consts::PI * u / eps).cos()) / (2.0 * eps)
    }
}

pub fn build_entropy_pair(v: &VelocityModel, q_lo: f64, q_hi: f64, kind: EntropyKind) -> Result<EntropyPair> {
    if !(q_lo < q_hi) || !q_lo.is_finite() || !q_hi.is_finite() {
        return Err(Error::InvalidInterval { lo: q_lo, hi: q_hi });
    }
    let a2: Box<dyn Fn(f64) -> f64 + Sync> = match &kind {
        EntropyKind::Tailored => {
            if q_lo <= 0.0 {
                let d0 = v.derivative(0.0);
                if d0 != 0.0 {
                    return Err(Error::EntropyUnboundedAtZero { v_prime_at_zero: d0 });
                }
            }
            let v = v.clone();
            Box::new(move |s: f64| {
                if s == 0.0 {
                    -v.second_derivative(0.0)
                } else {
                    -v.derivative(s) / s
                }
            })
        }
        EntropyKind::KruzkovSmoothed { k, eps } => {
            if !(*eps > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "smoothing width must be positive, got {eps}"
                )));
            }
            let (k, eps) = (*k, *eps);
            Box::new(move |s: f64| 2.0 * bump_density(s - k, eps))
        }
        EntropyKind::Custom(f) => {
            let f = f.0.clone();
            Box::new(move |s: f64| f(s))
        }
    };
    let mut nodes = MIN_NODES;
    if let EntropyKind::KruzkovSmoothed { eps, .. } = kind {
        nodes = nodes.max((8.0 * (q_hi - q_lo) / eps).ceil() as usize);
    }
    let h = (q_hi - q_lo) / (nodes - 1) as f64;
    let node = |i: usize| q_lo + h * i as f64;
    let fprime = |s: f64| v.value(s) + s * v.derivative(s);

    let mut alpha = vec![0.0; nodes];
    let mut alpha_prime = vec![0.0; nodes];
    let mut beta = vec![0.0; nodes];
    for i in 0..nodes - 1 {
        let s0 = node(i);
        let s1 = node(i + 1);
        // ∫ α'' and ∫ (s1 - u) α'' over the panel
        let (mut d1, mut d0) = (0.0, 0.0);
        // ∫ α'(u) f'(u) du with α'(u) = α'(s0) + ∫_{s0}^{u} α''
        let mut db = 0.0;
        for (&x, &w) in GAUSS_X.iter().zip(&GAUSS_W) {
            let u = s0 + h * x;
            let a = a2(u);
            d1 += w * a;
            d0 += w * (s1 - u) * a;
            let inner: f64 = GAUSS_X
                .iter()
                .zip(&GAUSS_W)
                .map(|(&y, &wy)| wy * a2(s0 + h * x * y))
                .sum::<f64>()
                * h
                * x;
            db += w * (alpha_prime[i] + inner) * fprime(u);
        }
        alpha_prime[i + 1] = alpha_prime[i] + h * d1;
        alpha[i + 1] = alpha[i] + h * alpha_prime[i] + h * d0;
        beta[i + 1] = beta[i] + h * db;
    }
    let alpha_second: Vec<f64> = (0..nodes).map(|i| a2(node(i))).collect();
    let beta_prime: Vec<f64> = (0..nodes).map(|i| alpha_prime[i] * fprime(node(i))).collect();
    Ok(EntropyPair {
        kind,
        q_lo,
        q_hi,
        h,
        alpha,
        alpha_prime,
        alpha_second,
        beta,
        beta_prime,
    })
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

impl EntropyPair {
    pub fn kind(&self) -> &EntropyKind {
        &self.kind
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.q_lo, self.q_hi)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.alpha.len())
            .map(|i| self.q_lo + self.h * i as f64)
            .collect()
    }

    /// Interpolates `(y, y')` at `s`; outside the table the values are
    /// continued linearly.
    fn interp(&self, y: &[f64], d: &[f64], s: f64) -> f64 {
        let last = y.len() - 1;
        if s <= self.q_lo {
            return y[0] + d[0] * (s - self.q_lo);
        }
        if s >= self.q_hi {
            return y[last] + d[last] * (s - self.q_hi);
        }
        let r = (s - self.q_lo) / self.h;
        let i = (r.floor() as usize).min(last - 1);
        hermite(y[i], y[i + 1], d[i], d[i + 1], self.h, r - i as f64)
    }

    pub fn alpha(&self, s: f64) -> f64 {
        self.interp(&self.alpha, &self.alpha_prime, s)
    }

    pub fn beta(&self, s: f64) -> f64 {
        self.interp(&self.beta, &self.beta_prime, s)
    }

    /// Tabulated `α'` at the nodes.
    pub fn alpha_prime_nodes(&self) -> &[f64] {
        &self.alpha_prime
    }

    pub fn beta_prime_nodes(&self) -> &[f64] {
        &self.beta_prime
    }

    pub fn alpha_second_nodes(&self) -> &[f64] {
        &self.alpha_second
    }

    pub fn is_convex(&self) -> bool {
        let scale = self.alpha_second.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        self.alpha_second.iter().all(|&a| a >= -1e-12 * scale)
    }

    /// `max |β' - α' f'|` over the nodes.
    pub fn compatibility_defect(&self, v: &VelocityModel) -> f64 {
        self.nodes()
            .iter()
            .zip(&self.alpha_prime)
            .zip(&self.beta_prime)
            .map(|((&s, &a), &b)| (b - a * (v.value(s) + s * v.derivative(s))).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_derivatives(&self) -> (f64, f64) {
        let m = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (m(&self.alpha_prime), m(&self.beta_prime))
    }
}

/// `B(u) = (1 + cos πu)/2` on `|u| <= 1`.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    }
}

/// `φ(t, x) = B((t - t_c)/r) B((x - x_c)/r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: usize,
    pub t_center: f64,
    pub x_center: f64,
    pub radius: f64,
}

impl TestFunction {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        bump((t - self.t_center) / self.radius) * bump((x - self.x_center) / self.radius)
    }

    /// `max(‖φ‖∞, ‖∇φ‖∞)`.
    pub fn c1_norm(&self) -> f64 {
        (std::f64::consts::FRAC_PI_2 / self.radius).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionFamily {
    pub functions: Vec<TestFunction>,
}

impl TestFunctionFamily {
    pub const DEFAULT_RADII: [f64; 3] = [0.1, 0.2, 0.4];

    /// For each radius `r`, `nt × nx` centers with `t_c` spread over
    /// `[0, T - r]` and `x_c` over `[x_min + r, x_max - r]`. Radii that do not
    /// fit the window are skipped.
    pub fn lattice(t_end: f64, grid: &GridSpec, radii: &[f64], nt: usize, nx: usize) -> Self {
        let spread = |lo: f64, hi: f64, n: usize, i: usize| {
            if n <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut functions = vec![];
        for &r in radii {
            let (x_lo, x_hi) = (grid.x_min() + r, grid.x_max() - r);
            if r > t_end || x_lo > x_hi {
                continue;
            }
            for it in 0..nt {
                for ix in 0..nx {
                    functions.push(TestFunction {
                        id: functions.len(),
                        t_center: spread(0.0, t_end - r, nt, it),
                        x_center: spread(x_lo, x_hi, nx, ix),
                        radius: r,
                    });
                }
            }
        }
        Self { functions }
    }

    /// The 5 × 9 lattice with radii 0.1, 0.2, 0.4.
    pub fn standard(t_end: f64, grid: &GridSpec) -> Self {
        Self::lattice(t_end, grid, &Self::DEFAULT_RADII, 5, 9)
    }
}

/// Entropy values along a trajectory, tabulated once per snapshot.
struct Tabulated {
    grid: GridSpec,
    times: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl Tabulated {
    fn new(traj: &Trajectory, pair: &EntropyPair) -> Self {
        let map = |f: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
            traj.snapshots
                .iter()
                .map(|s| s.q.values().iter().map(|&q| f(q)).collect())
                .collect()
        };
        Self {
            grid: *traj.grid(),
            times: traj.times(),
            alpha: map(&|q| pair.alpha(q)),
            beta: map(&|q| pair.beta(q)),
        }
    }

    /// `EF[φ]` for `φ` supported in `[ta, tb] × [xa, xb]`.
    ///
    /// Cell integrals of `∂ₓφ` and time integrals of `∂ₜφ` are taken exactly
    /// as differences of `φ`; the remaining factor uses the midpoint rule in
    /// `x` and the trapezoid rule between snapshots in `t`.
    fn functional(&self, phi: &dyn Fn(f64, f64) -> f64, (ta, tb): (f64, f64), (xa, xb): (f64, f64)) -> f64 {
        let g = &self.grid;
        let dx = g.dx();
        let n = g.n_cells();
        let j0 = (((xa - g.x_min()) / dx).floor().max(0.0) as usize).min(n);
        let j1 = (((xb - g.x_min()) / dx).ceil().max(0.0) as usize).min(n);
        let times = &self.times;
        let flux_term = |m: usize| -> f64 {
            let t = times[m];
            (j0..j1)
                .map(|j| self.beta[m][j] * (phi(t, g.interface(j + 1)) - phi(t, g.interface(j))))
                .sum()
        };
        let mut total = 0.0;
        let mut cached: Option<(usize, f64)> = None;
        for m in 0..times.len() - 1 {
            let (t0, t1) = (times[m], times[m + 1]);
            if t1 <= ta || t0 >= tb {
                continue;
            }
            let f0 = match cached {
                Some((k, v)) if k == m => v,
                _ => flux_term(m),
            };
            let f1 = flux_term(m + 1);
            cached = Some((m + 1, f1));
            let time_part: f64 = (j0..j1)
                .map(|j| {
                    let x = g.center(j);
                    0.5 * (self.alpha[m][j] + self.alpha[m + 1][j]) * (phi(t1, x) - phi(t0, x))
                })
                .sum::<f64>()
                * dx;
            total += time_part + 0.5 * (t1 - t0) * (f0 + f1);
        }
        let initial: f64 = (j0..j1)
            .map(|j| self.alpha[0][j] * phi(times[0], g.center(j)))
            .sum::<f64>()
            * dx;
        total + initial
    }
}

fn check_window(traj: &Trajectory, phi: &TestFunction) -> Result<()> {
    let grid = traj.grid();
    let t_last = traj.last().time;
    let tol = 1e-12 * t_last.max(1.0);
    let x_ok =
        phi.x_center - phi.radius >= grid.x_min() - tol && phi.x_center + phi.radius <= grid.x_max() + tol;
    let t_ok = phi.t_center + phi.radius <= t_last + tol;
    if x_ok && t_ok {
        Ok(())
    } else {
        Err(Error::TestFunctionOutOfWindow { id: phi.id })
    }
}

/// `EF[φ]` for an arbitrary test function supported in `t_support × x_support`.
pub fn weak_entropy_functional(
    traj: &Trajectory,
    pair: &EntropyPair,
    phi: &dyn Fn(f64, f64) -> f64,
    t_support: (f64, f64),
    x_support: (f64, f64),
) -> f64 {
    Tabulated::new(traj, pair).functional(phi, t_support, x_support)
}

/// Residual of every test function, in family order.
pub fn entropy_residuals(
    traj: &Trajectory,
    pair: &EntropyPair,
    family: &TestFunctionFamily,
) -> Result<Vec<f64>> {
    for phi in &family.functions {
        check_window(traj, phi)?;
    }
    let tab = Tabulated::new(traj, pair);
    Ok(family
        .functions
        .par_iter()
        .map(|phi| {
            let r = phi.radius;
            tab.functional(
                &|t, x| phi.value(t, x),
                (phi.t_center - r, phi.t_center + r),
                (phi.x_center - r, phi.x_center + r),
            )
        })
        .collect())
}

/// Worst (smallest) residual over the family and the id attaining it.
pub fn entropy_residual(
    traj: &Trajectory,
    pair: &EntropyPair,
    family: &TestFunctionFamily,
) -> Result<(f64, usize)> {
    let r = entropy_residuals(traj, pair, family)?;
    Ok(r.iter().zip(&family.functions).map(|(&v, phi)| (v, phi.id)).fold(
        (f64::INFINITY, usize::MAX),
        |best, cur| if cur.0 < best.0 { cur } else { best },
    ))
}

/// A jump from `q_l` to `q_r` moving at `speed` from `x0`, sampled as exact
/// cell averages at `snapshots` equispaced times on `[0, t_end]`. Used to
/// exercise the residual on discontinuities of either admissibility.
pub fn traveling_discontinuity(
    velocity: &VelocityModel,
    grid: &GridSpec,
    (q_l, q_r): (f64, f64),
    x0: f64,
    speed: f64,
    t_end: f64,
    snapshots: usize,
) -> Result<Trajectory> {
    let m = snapshots.max(2);
    let config =
        SolverConfig::new(Variant::Local, None, velocity.clone(), *grid, t_end).with_uniform_snapshots(m);
    let dx = grid.dx();
    let snaps = config
        .schedule()
        .into_iter()
        .map(|t| {
            let xs = x0 + speed * t;
            let values: Vec<f64> = (0..grid.n_cells())
                .map(|j| {
                    let cut = ((xs - grid.interface(j)) / dx).clamp(0.0, 1.0);
                    cut * q_l + (1.0 - cut) * q_r
                })
                .collect();
            let q = CellField::new(*grid, values, (q_l, q_r))?;
            let w: Vec<f64> = q
                .values()
                .iter()
                .map(|&s| velocity.value(s))
                .chain(std::iter::once(velocity.value(q_r)))
                .collect();
            let w = InterfaceField::new(*grid, w, velocity.value(q_l))?;
            Ok(Snapshot { time: t, q, w })
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_snapshots(config, snaps)
}
