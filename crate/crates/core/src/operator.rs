//! Downstream nonlocal averages evaluated at cell interfaces.
//!
//! For a piecewise-constant field `g` with right extension `g_R`, the
//! average at interface `x_k` is
//!
//! ```text
//! A_k = Σ_{m ≥ 0} w_m g_{k+m} + g_R · T_{n-k},
//!   w_m = ∫_{m dx}^{(m+1) dx} η⁻¹γ(s/η) ds,   T_m = ∫_{m dx}^∞ η⁻¹γ(s/η) ds,
//! ```
//!
//! which is exact for piecewise-constant data. The exponential kernel admits
//! the right-to-left recursion `A_k = e^{-dx/η} A_{k+1} + (1 - e^{-dx/η}) g_k`
//! seeded with `A_n = g_R`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{sequence_variation, CellField, GridSpec};
use crate::models::{KernelSpec, VelocityModel};

/// Exponential weights below this tail mass are dropped from the general sum.
const EXP_TAIL_CUTOFF: f64 = 1e-20;

/// Values at the `n_cells + 1` interfaces of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceField {
    grid: GridSpec,
    values: Vec<f64>,
    /// Limit of the averaged quantity at `-∞`.
    left_limit: f64,
}

impl InterfaceField {
    pub fn new(grid: GridSpec, values: Vec<f64>, left_limit: f64) -> Result<Self> {
        if values.len() != grid.n_cells() + 1 {
            return Err(Error::InvalidGrid(format!(
                "interface field has {} values for {} interfaces",
                values.len(),
                grid.n_cells() + 1
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonfiniteState { time: 0.0, cell: k });
        }
        Ok(Self {
            grid,
            values,
            left_limit,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_limit(&self) -> f64 {
        self.left_limit
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total variation on R, counting the transition from the left limit.
    pub fn total_variation(&self) -> f64 {
        let last = *self.values.last().unwrap();
        sequence_variation(self.left_limit, &self.values, last)
    }

    /// CSV with header `x,w` at interface coordinates.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,w")?;
        for (k, w) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.interface(k), w)?;
        }
        Ok(())
    }
}

fn ensure_normalized(kernel: &KernelSpec) -> Result<()> {
    if kernel.is_normalized() {
        Ok(())
    } else {
        Err(Error::KernelNotNormalized {
            mass: kernel.total_mass(),
        })
    }
}

/// Per-cell kernel masses `w_m` for a fixed cell width, truncated where the
/// kernel support (or the exponential tail) ends.
#[derive(Debug, Clone)]
pub struct CellWeights {
    dx: f64,
    masses: Vec<f64>,
}

impl CellWeights {
    pub fn new(kernel: &KernelSpec, dx: f64, max_cells: usize) -> Self {
        let reach = kernel.support().unwrap_or(kernel.eta() * -EXP_TAIL_CUTOFF.ln());
        let cells = ((reach / dx).ceil() as usize + 1).min(max_cells).max(1);
        let masses = (0..cells)
            .map(|m| kernel.cell_mass_unchecked(m as f64 * dx, (m + 1) as f64 * dx))
            .collect();
        Self { dx, masses }
    }

    /// Mass of the nearest downstream cell.
    pub fn near_field(&self) -> f64 {
        self.masses[0]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }
}

/// Downstream average of a cell field at every interface, summing exact
/// per-cell kernel masses. Works for every kernel family.
pub fn downstream_average(f: &CellField, kernel: &KernelSpec) -> Result<InterfaceField> {
    ensure_normalized(kernel)?;
    let grid = *f.grid();
    let weights = CellWeights::new(kernel, grid.dx(), grid.n_cells());
    let values = weighted_sums(f.values(), f.right(), kernel, &weights);
    InterfaceField::new(grid, values, f.left())
}

fn weighted_sums(g: &[f64], g_right: f64, kernel: &KernelSpec, weights: &CellWeights) -> Vec<f64> {
    let n = g.len();
    let dx = weights.dx;
    let masses = &weights.masses;
    let at = |k: usize| -> f64 {
        let reach = (n - k).min(masses.len());
        let near: f64 = masses[..reach]
            .iter()
            .zip(&g[k..k + reach])
            .map(|(w, v)| w * v)
            .sum();
        let tail = kernel.cell_mass_unchecked((n - k) as f64 * dx, f64::INFINITY);
        near + g_right * tail
    };
    if n * masses.len() > 1 << 16 {
        (0..=n).into_par_iter().map(at).collect()
    } else {
        (0..=n).map(at).collect()
    }
}

/// Right-to-left O(N) recursion for the exponential kernel.
pub fn exponential_scan(g: &[f64], g_right: f64, eta: f64, dx: f64) -> Vec<f64> {
    scan_with(g.len(), |k| g[k], g_right, eta, dx)
}

#[inline]
fn scan_with(n: usize, g: impl Fn(usize) -> f64, g_right: f64, eta: f64, dx: f64) -> Vec<f64> {
    let h = dx / eta;
    let decay = (-h).exp();
    let gain = -(-h).exp_m1();
    let mut out = vec![0.0; n + 1];
    out[n] = g_right;
    for k in (0..n).rev() {
        out[k] = decay * out[k + 1] + gain * g(k);
    }
    out
}

fn velocity_values(q: &CellField, v: &VelocityModel) -> (Vec<f64>, f64, f64) {
    let vals = q.values().iter().map(|&s| v.value(s)).collect();
    (vals, v.value(q.left()), v.value(q.right()))
}

/// Nonlocal velocity `W = (η⁻¹γ(·/η)) ⋆ V(q)` looking downstream, evaluated
/// by the exact-mass sum (any kernel).
pub fn nonlocal_velocity(q: &CellField, kernel: &KernelSpec, v: &VelocityModel) -> Result<InterfaceField> {
    ensure_normalized(kernel)?;
    let grid = *q.grid();
    let (vq, v_left, v_right) = velocity_values(q, v);
    let weights = CellWeights::new(kernel, grid.dx(), grid.n_cells());
    let values = weighted_sums(&vq, v_right, kernel, &weights);
    InterfaceField::new(grid, values, v_left)
}

/// Same as [`nonlocal_velocity`] for the exponential kernel, in one sweep.
pub fn nonlocal_velocity_exponential_scan(
    q: &CellField,
    kernel: &KernelSpec,
    v: &VelocityModel,
) -> Result<InterfaceField> {
    if !kernel.is_exponential() {
        return Err(Error::WrongKernelFamily {
            family: kernel.family_name(),
        });
    }
    let grid = *q.grid();
    let qs = q.values();
    let values = scan_with(
        qs.len(),
        |k| v.value(qs[k]),
        v.value(q.right()),
        kernel.eta(),
        grid.dx(),
    );
    InterfaceField::new(grid, values, v.value(q.left()))
}

/// `V(γ ⋆ q)`: the velocity of the model that averages the density.
pub fn nonlocal_solution_velocity(
    q: &CellField,
    kernel: &KernelSpec,
    v: &VelocityModel,
) -> Result<InterfaceField> {
    ensure_normalized(kernel)?;
    let grid = *q.grid();
    let avg = if kernel.is_exponential() {
        exponential_scan(q.values(), q.right(), kernel.eta(), grid.dx())
    } else {
        let weights = CellWeights::new(kernel, grid.dx(), grid.n_cells());
        weighted_sums(q.values(), q.right(), kernel, &weights)
    };
    let values = avg.into_iter().map(|c| v.value(c)).collect();
    InterfaceField::new(grid, values, v.value(q.left()))
}

/// Per-cell residual of `η ∂ₓW = W − V(q)` for the exponential kernel.
///
/// On cell `j` the derivative is the difference quotient across the cell and
/// `W` is taken at the cell's upstream interface, so the residual vanishes at
/// first order in `dx` for smooth data.
pub fn derivative_identity_residuals(
    q: &CellField,
    kernel: &KernelSpec,
    v: &VelocityModel,
) -> Result<Vec<f64>> {
    let w = nonlocal_velocity_exponential_scan(q, kernel, v)?;
    let eta = kernel.eta();
    let dx = q.grid().dx();
    let wv = w.values();
    Ok(q.values()
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let lhs = eta * (wv[j + 1] - wv[j]) / dx;
            let rhs = wv[j] - v.value(s);
            (lhs - rhs).abs()
        })
        .collect())
}

/// Maximum of [`derivative_identity_residuals`] over the interior cells.
pub fn derivative_identity_residual(q: &CellField, kernel: &KernelSpec, v: &VelocityModel) -> Result<f64> {
    let r = derivative_identity_residuals(q, kernel, v)?;
    let n = r.len();
    Ok(r[1..n - 1].iter().copied().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::InitialDatum;
    use proptest::prelude::*;

    // Midpoint rule with `panels` subintervals over [x, x + 40η]; test oracle
    // independent of the per-cell mass machinery.
    fn brute_force(q: &CellField, kernel: &KernelSpec, g: impl Fn(f64) -> f64, x: f64, panels: usize) -> f64 {
        let span = 40.0 * kernel.eta();
        let h = span / panels as f64;
        (0..panels)
            .map(|i| {
                let s = (i as f64 + 0.5) * h;
                kernel.weight(s) * g(q.evaluate(x + s)) * h
            })
            .sum()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> GridSpec {
        GridSpec::new(lo, hi, n).unwrap()
    }

    #[test]
    fn constant_state_is_fixed() {
        let q = CellField::constant(grid(-1.0, 1.0, 50), 0.4);
        let v = VelocityModel::quadratic();
        for k in [
            KernelSpec::exponential(0.1).unwrap(),
            KernelSpec::constant(0.13).unwrap(),
            KernelSpec::tabulated(0.2, vec![0.0, 1.0, 2.0], vec![1.0, 0.4, 0.0]).unwrap(),
        ] {
            let w = nonlocal_velocity(&q, &k, &v).unwrap();
            assert!(w.values().iter().all(|&x| (x - 0.84).abs() < 1e-14), "{k:?}");
        }
        let k = KernelSpec::exponential(0.1).unwrap();
        let w = nonlocal_velocity_exponential_scan(&q, &k, &v).unwrap();
        assert!(w.values().iter().all(|&x| (x - 0.84).abs() < 1e-14));
    }

    #[test]
    fn step_datum_exact_values() {
        let eta = 0.1;
        // dx = 0.01 so that -η is an interface
        let g = grid(-1.0, 1.0, 200);
        let q = InitialDatum::riemann(0.0, 1.0, 0.0).rasterize(&g).unwrap();
        let k = KernelSpec::exponential(eta).unwrap();
        let v = VelocityModel::linear();
        let w = nonlocal_velocity(&q, &k, &v).unwrap();
        let at_zero = w.values()[100];
        let at_minus_eta = w.values()[90];
        assert!(at_zero.abs() < 1e-15);
        let expected = 1.0 - (-1.0f64).exp();
        assert!((at_minus_eta - expected).abs() < 1e-14);
        assert!((at_minus_eta - 0.632121).abs() < 1e-6);
        let oracle = brute_force(&q, &k, |s| v.value(s), -eta, 1_000_000);
        assert!((at_minus_eta - oracle).abs() < 1e-6);
    }

    #[test]
    fn constant_kernel_one_cell_reach() {
        let g = grid(-2.0, 2.0, 80);
        let dx = g.dx();
        let q = InitialDatum::standard_box().rasterize(&g).unwrap();
        let k = KernelSpec::constant(dx).unwrap();
        let v = VelocityModel::quadratic();
        let w = nonlocal_velocity(&q, &k, &v).unwrap();
        for i in 0..g.n_cells() {
            assert!((w.values()[i] - v.value(q.values()[i])).abs() < 1e-14);
        }
        // brute-force quadrature agrees at a few interior interfaces
        for i in [10, 29, 30, 50] {
            let oracle = brute_force(&q, &k, |s| v.value(s), g.interface(i), 1_000_000);
            assert!((w.values()[i] - oracle).abs() < 1e-5, "i = {i}");
        }
    }

    #[test]
    fn general_path_matches_quadrature_for_tabulated() {
        let g = grid(-1.0, 1.0, 100);
        let q = CellField::from_centers(g, |x| 0.5 + 0.3 * (3.0 * x).sin()).unwrap();
        let k = KernelSpec::tabulated(0.15, vec![0.0, 0.5, 2.0], vec![1.0, 0.6, 0.0]).unwrap();
        let v = VelocityModel::greenshields(3, 1.0, 1.0);
        let w = nonlocal_velocity(&q, &k, &v).unwrap();
        for i in [0, 17, 55, 80] {
            let oracle = brute_force(&q, &k, |s| v.value(s), g.interface(i), 400_000);
            assert!((w.values()[i] - oracle).abs() < 1e-5, "i = {i}");
        }
    }

    #[test]
    fn tail_uses_right_extension() {
        let g = grid(0.0, 1.0, 10);
        let q = CellField::new(g, vec![0.0; 10], (0.0, 1.0)).unwrap();
        let k = KernelSpec::exponential(0.2).unwrap();
        let v = VelocityModel::linear();
        let w = nonlocal_velocity(&q, &k, &v).unwrap();
        // V = 1 on the mesh, V(q_R) = 0 beyond x_max = 1
        for (i, x) in (0..=10).map(|i| (i, g.interface(i))) {
            let expected = 1.0 - (-(1.0 - x) / 0.2f64).exp();
            assert!((w.values()[i] - expected).abs() < 1e-14);
        }
        let kc = KernelSpec::constant(0.3).unwrap();
        let wc = nonlocal_velocity(&q, &kc, &v).unwrap();
        for i in 0..=10 {
            let x = g.interface(i);
            let expected = 1.0 - (1.0 - (1.0 - x) / 0.3).max(0.0);
            assert!((wc.values()[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn scan_rejects_other_kernels() {
        let q = CellField::constant(grid(0.0, 1.0, 4), 0.5);
        let k = KernelSpec::constant(0.1).unwrap();
        assert!(matches!(
            nonlocal_velocity_exponential_scan(&q, &k, &VelocityModel::linear()),
            Err(Error::WrongKernelFamily { family: "constant" })
        ));
        assert!(derivative_identity_residual(&q, &k, &VelocityModel::linear()).is_err());
    }

    #[test]
    fn unnormalized_kernel_rejected() {
        let q = CellField::constant(grid(0.0, 1.0, 4), 0.5);
        let k = KernelSpec::tabulated(1.0, vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            nonlocal_velocity(&q, &k, &VelocityModel::linear()),
            Err(Error::KernelNotNormalized { .. })
        ));
        assert!(nonlocal_solution_velocity(&q, &k, &VelocityModel::linear()).is_err());
    }

    #[test]
    fn residual_vanishes_for_constant_state() {
        let q = CellField::constant(grid(0.0, 1.0, 40), 0.3);
        let k = KernelSpec::exponential(0.05).unwrap();
        let r = derivative_identity_residual(&q, &k, &VelocityModel::quadratic()).unwrap();
        assert!(r < 1e-14);
    }

    #[test]
    fn residual_is_first_order_for_smooth_data() {
        let k = KernelSpec::exponential(0.1).unwrap();
        let v = VelocityModel::quadratic();
        let smooth = |n: usize| {
            let g = grid(-3.0, 3.0, n);
            let q = CellField::from_centers(g, |x| 0.5 + 0.25 * x.sin()).unwrap();
            derivative_identity_residual(&q, &k, &v).unwrap()
        };
        let r: Vec<f64> = [300, 600, 1200, 2400].iter().map(|&n| smooth(n)).collect();
        for w in r.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}, residuals {r:?}");
        }
    }

    #[test]
    fn residual_at_jump_is_bounded() {
        let g = grid(-1.0, 1.0, 400);
        let q = InitialDatum::riemann(0.2, 0.8, 0.0).rasterize(&g).unwrap();
        let k = KernelSpec::exponential(0.05).unwrap();
        let v = VelocityModel::quadratic();
        let r = derivative_identity_residuals(&q, &k, &v).unwrap();
        let (argmax, &max) = r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let bound = v.max_abs_derivative(0.2, 0.8, 1000) * 0.6;
        assert!(max <= bound);
        assert!((g.center(argmax)).abs() < 0.05, "max at {}", g.center(argmax));
        // far upstream of the jump the residual is negligible
        assert!(r[..60].iter().all(|&x| x < 1e-5 * max));
    }

    fn random_field() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
        (prop::collection::vec(0.0f64..1.0, 60), 0.0f64..1.0, 0.0f64..1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn scan_matches_general_path((vals, l, r) in random_field(), eta in 0.005f64..0.5) {
            let q = CellField::new(grid(-1.0, 2.0, 60), vals, (l, r)).unwrap();
            let k = KernelSpec::exponential(eta).unwrap();
            let v = VelocityModel::greenshields(3, 1.0, 1.0);
            let slow = nonlocal_velocity(&q, &k, &v).unwrap();
            let fast = nonlocal_velocity_exponential_scan(&q, &k, &v).unwrap();
            for (a, b) in slow.values().iter().zip(fast.values()) {
                prop_assert!((a - b).abs() < 1e-13);
            }
        }

        #[test]
        fn comparison_and_range((vals, l, r) in random_field(), bump in prop::collection::vec(0.0f64..0.2, 60), which in 0usize..3) {
            let g = grid(0.0, 1.0, 60);
            let k = match which {
                0 => KernelSpec::exponential(0.07).unwrap(),
                1 => KernelSpec::constant(0.11).unwrap(),
                _ => KernelSpec::tabulated(0.1, vec![0.0, 1.0, 1.5], vec![1.0, 0.5, 0.2]).unwrap(),
            };
            let v = VelocityModel::quadratic();
            let q = CellField::new(g, vals.clone(), (l, r)).unwrap();
            let higher: Vec<f64> = vals.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
            let q2 = CellField::new(g, higher, (l, r)).unwrap();
            let w = nonlocal_velocity(&q, &k, &v).unwrap();
            let w2 = nonlocal_velocity(&q2, &k, &v).unwrap();
            let (lo, hi) = q.range();
            for (a, b) in w.values().iter().zip(w2.values()) {
                prop_assert!(a + 1e-14 >= *b);
                prop_assert!(*a <= v.value(lo) + 1e-14 && *a >= v.value(hi) - 1e-14);
            }
        }

        #[test]
        fn linear_velocity_commutes((vals, l, r) in random_field(), which in 0usize..2) {
            let g = grid(0.0, 1.0, 60);
            let k = if which == 0 { KernelSpec::exponential(0.05).unwrap() } else { KernelSpec::constant(0.2).unwrap() };
            let v = VelocityModel::linear();
            let q = CellField::new(g, vals, (l, r)).unwrap();
            let a = nonlocal_velocity(&q, &k, &v).unwrap();
            let b = nonlocal_solution_velocity(&q, &k, &v).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-13);
            }
        }

        #[test]
        fn jensen_for_convex_velocity(x0 in 0.1f64..0.9, ql in 0.0f64..1.0, qr in 0.0f64..1.0) {
            let g = grid(0.0, 1.0, 50);
            let q = InitialDatum::riemann(ql, qr, x0).rasterize(&g).unwrap();
            let k = KernelSpec::constant(0.3).unwrap();
            let v = VelocityModel::convex_quadratic();
            let sol = nonlocal_solution_velocity(&q, &k, &v).unwrap();
            let vel = nonlocal_velocity(&q, &k, &v).unwrap();
            for (a, b) in sol.values().iter().zip(vel.values()) {
                prop_assert!(*a <= b + 1e-14);
            }
        }
    }
}
