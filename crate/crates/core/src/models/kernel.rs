//! Downstream averaging kernels.
//!
//! A kernel is stored in unscaled form `γ` on `[0, ∞)` together with its
//! reach `η`; every integral is taken against the scaled weight
//! `η⁻¹ γ(s/η)`. Kernels are normalized so that `∫γ = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `γ(s) = e^{-s}`
    Exponential,
    /// `γ(s) = χ_(0,1)(s)`
    Constant,
    /// Piecewise-linear `γ` through the knots, zero past the last knot.
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    knots: Vec<f64>,
    values: Vec<f64>,
    // ∫_0^{knots[i]} γ
    cumulative: Vec<f64>,
}

impl Table {
    fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidKernel(
                "tabulated kernel needs at least two knots and one value per knot".into(),
            ));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidKernel("first knot must be 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || !knots.iter().all(|k| k.is_finite()) {
            return Err(Error::InvalidKernel(
                "knots must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidKernel(
                "values must be finite and nonnegative".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidKernel("values must be non-increasing".into()));
        }
        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(0.0);
        for i in 1..knots.len() {
            let seg = 0.5 * (knots[i] - knots[i - 1]) * (values[i] + values[i - 1]);
            cumulative.push(cumulative[i - 1] + seg);
        }
        Ok(Self {
            knots,
            values,
            cumulative,
        })
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn rescale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self.cumulative.iter_mut().for_each(|c| *c *= factor);
    }

    fn segment(&self, u: f64) -> usize {
        // index i with knots[i] <= u < knots[i + 1]
        match self.knots.binary_search_by(|k| k.total_cmp(&u)) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    fn eval(&self, u: f64) -> f64 {
        if u < 0.0 || u > *self.knots.last().unwrap() {
            return 0.0;
        }
        let i = self.segment(u);
        let (k0, k1) = (self.knots[i], self.knots[i + 1]);
        let t = (u - k0) / (k1 - k0);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    fn cumulative_at(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= *self.knots.last().unwrap() {
            return self.total();
        }
        let i = self.segment(u);
        self.cumulative[i] + 0.5 * (u - self.knots[i]) * (self.values[i] + self.eval(u))
    }

    fn first_moment(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| (k[1] - k[0]) / 6.0 * (v[0] * (2.0 * k[0] + k[1]) + v[1] * (k[0] + 2.0 * k[1])))
            .sum()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Nonlocal weight `γ` with reach `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub struct KernelSpec {
    family: KernelFamily,
    eta: f64,
    normalized: bool,
}

/// Config form: `{"family": "exponential", "eta": 0.01}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelRecord {
    Exponential {
        eta: f64,
    },
    Constant {
        eta: f64,
    },
    Tabulated {
        eta: f64,
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TryFrom<KernelRecord> for KernelSpec {
    type Error = Error;

    fn try_from(r: KernelRecord) -> Result<Self> {
        match r {
            KernelRecord::Exponential { eta } => KernelSpec::exponential(eta),
            KernelRecord::Constant { eta } => KernelSpec::constant(eta),
            KernelRecord::Tabulated { eta, knots, values } => KernelSpec::tabulated(eta, knots, values),
        }
    }
}

impl From<KernelSpec> for KernelRecord {
    fn from(k: KernelSpec) -> Self {
        let eta = k.eta;
        match k.family {
            KernelFamily::Exponential => KernelRecord::Exponential { eta },
            KernelFamily::Constant => KernelRecord::Constant { eta },
            KernelFamily::Tabulated(t) => KernelRecord::Tabulated {
                eta,
                knots: t.knots,
                values: t.values,
            },
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("reach must be positive, got {eta}")))
    }
}

impl KernelSpec {
    pub fn exponential(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self {
            family: KernelFamily::Exponential,
            eta,
            normalized: true,
        })
    }

    pub fn constant(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self {
            family: KernelFamily::Constant,
            eta,
            normalized: true,
        })
    }

    /// Piecewise-linear kernel through `(knots[i], values[i])`.
    ///
    /// A table whose mass is not 1 is rescaled (with a warning). An
    /// identically zero table cannot be rescaled and stays unnormalized; the
    /// nonlocal operators reject it.
    pub fn tabulated(eta: f64, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_eta(eta)?;
        let mut table = Table::new(knots, values)?;
        let total = table.total();
        let normalized = total > 0.0;
        if normalized && (total - 1.0).abs() > NORMALIZATION_TOL {
            log::warn!("tabulated kernel has mass {total}; rescaling to 1");
            table.rescale(1.0 / total);
        }
        Ok(Self {
            family: KernelFamily::Tabulated(table),
            eta,
            normalized,
        })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            KernelFamily::Exponential => "exponential",
            KernelFamily::Constant => "constant",
            KernelFamily::Tabulated(_) => "tabulated",
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Same shape with a different reach.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { eta, ..self.clone() })
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.family, KernelFamily::Exponential)
    }

    /// Whether `γ` is strictly decreasing on its support. The constant kernel
    /// and tabulated kernels with flat segments are only non-increasing.
    pub fn strictly_decreasing(&self) -> bool {
        match &self.family {
            KernelFamily::Exponential => true,
            KernelFamily::Constant => false,
            KernelFamily::Tabulated(t) => t.values.windows(2).all(|w| w[1] < w[0]),
        }
    }

    /// Unscaled `γ(u)`.
    pub fn shape(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match &self.family {
            KernelFamily::Exponential => (-u).exp(),
            KernelFamily::Constant => {
                if u < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Tabulated(t) => t.eval(u),
        }
    }

    /// Scaled weight `η⁻¹ γ(s/η)` at downstream offset `s`.
    pub fn weight(&self, s: f64) -> f64 {
        self.shape(s / self.eta) / self.eta
    }

    /// Offset beyond which the scaled weight vanishes, if finite.
    pub fn support(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Exponential => None,
            KernelFamily::Constant => Some(self.eta),
            KernelFamily::Tabulated(t) => Some(self.eta * t.knots.last().unwrap()),
        }
    }

    fn unscaled_cumulative(&self, u: f64) -> f64 {
        match &self.family {
            KernelFamily::Exponential => -(-u.max(0.0)).exp_m1(),
            KernelFamily::Constant => u.clamp(0.0, 1.0),
            KernelFamily::Tabulated(t) => t.cumulative_at(u),
        }
    }

    /// `∫_a^b η⁻¹ γ(s/η) ds` for downstream offsets `0 <= a <= b`; `b` may be
    /// `f64::INFINITY`.
    pub fn cell_mass(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) || a < 0.0 {
            return Err(Error::InvalidInterval { lo: a, hi: b });
        }
        Ok(self.cell_mass_unchecked(a, b))
    }

    pub(crate) fn cell_mass_unchecked(&self, a: f64, b: f64) -> f64 {
        let (ua, ub) = (a / self.eta, b / self.eta);
        match &self.family {
            // e^{-ua} - e^{-ub}, written to keep relative accuracy for thin cells
            KernelFamily::Exponential => {
                if ub.is_infinite() {
                    (-ua).exp()
                } else {
                    -(-ua).exp() * (-(ub - ua)).exp_m1()
                }
            }
            _ => self.unscaled_cumulative(ub) - self.unscaled_cumulative(ua),
        }
    }

    /// Total mass `∫_0^∞ γ`.
    pub fn total_mass(&self) -> f64 {
        self.cell_mass_unchecked(0.0, f64::INFINITY)
    }

    /// `∫_0^∞ γ(s) s ds` in unscaled variables.
    pub fn first_moment(&self) -> f64 {
        match &self.family {
            KernelFamily::Exponential => 1.0,
            KernelFamily::Constant => 0.5,
            KernelFamily::Tabulated(t) => t.first_moment(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Composite Simpson on [a, b] with n (even) panels; test-only oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn triangle() -> KernelSpec {
        KernelSpec::tabulated(0.5, vec![0.0, 2.0], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn exponential_full_mass() {
        let k = KernelSpec::exponential(0.3).unwrap();
        assert_eq!(k.cell_mass(0.0, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn constant_mass_over_support() {
        let k = KernelSpec::constant(0.1).unwrap();
        assert_eq!(k.cell_mass(0.0, 0.1).unwrap(), 1.0);
        assert_eq!(k.cell_mass(0.1, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn exponential_mass_over_one_reach() {
        let eta = 0.01;
        let k = KernelSpec::exponential(eta).unwrap();
        let m = k.cell_mass(0.0, eta).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        assert!((m - expected).abs() < 1e-15);
        assert!((m - 0.632121).abs() < 1e-6);
        let quad = simpson(|s| k.weight(s), 0.0, eta, 2000);
        assert!((m - quad).abs() < 1e-12);
    }

    #[test]
    fn rejects_inverted_interval() {
        let k = KernelSpec::exponential(1.0).unwrap();
        assert!(matches!(
            k.cell_mass(2.0, 1.0),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(k.cell_mass(-1.0, 1.0).is_err());
    }

    #[test]
    fn first_moments() {
        assert_eq!(KernelSpec::exponential(0.1).unwrap().first_moment(), 1.0);
        assert_eq!(KernelSpec::constant(0.1).unwrap().first_moment(), 0.5);
        let zero = KernelSpec::tabulated(1.0, vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(zero.first_moment(), 0.0);
        assert!(!zero.is_normalized());

        // oracles: ∫ s e^{-s} over [0, 60] and ∫ s γ for the triangle
        let e = simpson(|s| s * (-s).exp(), 0.0, 60.0, 60_000);
        assert!((e - 1.0).abs() < 1e-10);
        let c = simpson(|s| s, 0.0, 1.0, 2);
        assert!((c - 0.5).abs() < 1e-15);
        let t = triangle();
        let tq = simpson(|s| s * t.shape(s), 0.0, 2.0, 2000);
        assert!((t.first_moment() - tq).abs() < 1e-12);
    }

    #[test]
    fn tabulated_rescaled_to_unit_mass() {
        let k = KernelSpec::tabulated(1.0, vec![0.0, 1.0, 3.0], vec![4.0, 2.0, 0.0]).unwrap();
        assert!(k.is_normalized());
        assert!((k.total_mass() - 1.0).abs() < 1e-15);
        assert!(k.strictly_decreasing());
        let flat = KernelSpec::tabulated(1.0, vec![0.0, 1.0, 2.0], vec![0.5, 0.5, 0.5]).unwrap();
        assert!(!flat.strictly_decreasing());
    }

    #[test]
    fn tabulated_validation() {
        assert!(KernelSpec::tabulated(1.0, vec![0.5, 1.0], vec![1.0, 0.0]).is_err());
        assert!(KernelSpec::tabulated(1.0, vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(KernelSpec::tabulated(1.0, vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(KernelSpec::tabulated(1.0, vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(KernelSpec::exponential(0.0).is_err());
    }

    #[test]
    fn tabulated_mass_matches_quadrature() {
        let k = triangle();
        let m = k.cell_mass(0.1, 0.7).unwrap();
        let quad = simpson(|s| k.weight(s), 0.1, 0.7, 2000);
        assert!((m - quad).abs() < 1e-12);
    }

    #[test]
    fn partition_sums_to_one() {
        let k = KernelSpec::constant(0.25).unwrap();
        let dx = 0.01;
        let s: f64 = (0..100)
            .map(|m| k.cell_mass(m as f64 * dx, (m + 1) as f64 * dx).unwrap())
            .sum();
        assert!((s - 1.0).abs() < 1e-14);

        let k = KernelSpec::exponential(0.05).unwrap();
        let partial = |cells: usize| -> f64 {
            (0..cells)
                .map(|m| k.cell_mass(m as f64 * dx, (m + 1) as f64 * dx).unwrap())
                .sum()
        };
        assert!(partial(10) < partial(40));
        assert!((partial(400) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn serde_round_trip() {
        let k: KernelSpec = serde_json::from_str(r#"{"family":"exponential","eta":1e-2}"#).unwrap();
        assert!(k.is_exponential());
        assert_eq!(k.eta(), 0.01);
        let t: KernelSpec =
            serde_json::from_str(r#"{"family":"tabulated","eta":0.1,"knots":[0,1,2],"values":[1,0.5,0]}"#)
                .unwrap();
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"constant","eta":-1}"#).is_err());
    }

    proptest! {
        #[test]
        fn mass_is_additive(a in 0.0f64..2.0, d1 in 0.0f64..2.0, d2 in 0.0f64..2.0, which in 0usize..3) {
            let k = match which {
                0 => KernelSpec::exponential(0.37).unwrap(),
                1 => KernelSpec::constant(0.8).unwrap(),
                _ => triangle(),
            };
            let (b, c) = (a + d1, a + d1 + d2);
            let lhs = k.cell_mass(a, b).unwrap() + k.cell_mass(b, c).unwrap();
            prop_assert!((lhs - k.cell_mass(a, c).unwrap()).abs() < 1e-14);
        }
    }
}
