//! Sampling-based checks of the structural hypotheses placed on `V`.
//!
//! All verdicts are evaluated on `samples` equispaced points of the state
//! interval, endpoints included.

use serde::{Deserialize, Serialize};

use super::velocity::{sample, VelocityModel};
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 10_000;

const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    StrictlyConcave,
    StrictlyConvex,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub q_lo: f64,
    pub q_hi: f64,
    pub samples: usize,
    /// `V' <= 0` and `V >= 0` on the interval.
    pub velocity_admissible: bool,
    /// `V'(x) x - V(x) + V(q_lo) <= 0` on the interval.
    pub tv_bound: bool,
    /// Largest sampled value of `V'(x) x - V(x) + V(q_lo)`.
    pub tv_bound_worst: f64,
    /// `-∞ < V'(s)/s < 0` on the interval.
    pub v_prime_bounds: bool,
    /// Sampled supremum of `V'(s)/s`; `None` when the ratio diverges.
    pub v_prime_ratio_max: Option<f64>,
    pub flux_curvature: Curvature,
    /// `s ↦ s V(s)` strictly convex or strictly concave.
    pub flux_strict_convexity: bool,
    /// Attained `min |2V' + s V''|`; zero when the sign is not uniform.
    pub oleinik_constant: f64,
    /// `|2V'(s) + s V''(s)| >= c > 0` on the interval.
    pub oleinik_uniform: bool,
}

impl ConditionReport {
    /// Uniform TV bound, bounded negative `V'/s`, and strict flux convexity all
    /// hold: the hypotheses of the exponential-kernel singular limit.
    pub fn singular_limit_conditions(&self) -> bool {
        self.tv_bound && self.v_prime_bounds && self.flux_strict_convexity
    }
}

/// `f''(s) = 2V'(s) + s V''(s)` for the flux `f(s) = s V(s)`.
pub fn flux_second_derivative(v: &VelocityModel, s: f64) -> f64 {
    2.0 * v.derivative(s) + s * v.second_derivative(s)
}

/// Classifies `f''` samples; isolated zeros (such as `f''(0) = 0` for
/// `V = 1 - s²`) do not break strictness, a run of two or more does.
pub(crate) fn classify_curvature(values: &[f64]) -> Curvature {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = TOL * scale;
    let any_pos = values.iter().any(|&v| v > tol);
    let any_neg = values.iter().any(|&v| v < -tol);
    let zero_run = values.windows(2).any(|w| w[0].abs() <= tol && w[1].abs() <= tol)
        || (values.len() == 1 && values[0].abs() <= tol);
    match (any_neg, any_pos, zero_run) {
        (true, false, false) => Curvature::StrictlyConcave,
        (false, true, false) => Curvature::StrictlyConvex,
        _ => Curvature::Neither,
    }
}

pub fn flux_curvature(v: &VelocityModel, q_lo: f64, q_hi: f64, samples: usize) -> Curvature {
    let f2: Vec<f64> = if q_lo == q_hi {
        vec![flux_second_derivative(v, q_lo)]
    } else {
        sample(q_lo, q_hi, samples)
            .map(|s| flux_second_derivative(v, s))
            .collect()
    };
    classify_curvature(&f2)
}

pub fn check_velocity_conditions(
    v: &VelocityModel,
    q_lo: f64,
    q_hi: f64,
    samples: usize,
) -> Result<ConditionReport> {
    if !(q_lo <= q_hi) || !q_lo.is_finite() || !q_hi.is_finite() {
        return Err(Error::InvalidInterval { lo: q_lo, hi: q_hi });
    }
    let pts: Vec<f64> = if q_lo == q_hi {
        vec![q_lo]
    } else {
        sample(q_lo, q_hi, samples).collect()
    };
    let v_scale = pts.iter().fold(1.0f64, |m, &s| {
        m.max(v.value(s).abs()).max(s * v.derivative(s).abs())
    });

    let velocity_admissible = pts
        .iter()
        .all(|&s| v.derivative(s) <= TOL * v_scale && v.value(s) >= -TOL * v_scale);

    let v_lo = v.value(q_lo);
    let tv_bound_worst = pts
        .iter()
        .map(|&x| v.derivative(x) * x - v.value(x) + v_lo)
        .fold(f64::NEG_INFINITY, f64::max);
    let tv_bound = tv_bound_worst <= TOL * v_scale;

    // V'(s)/s, with the limit V''(0) at s = 0 when V'(0) = 0.
    let mut ratio_max = Some(f64::NEG_INFINITY);
    for &s in &pts {
        let ratio = if s == 0.0 {
            let d = v.derivative(0.0);
            if d.abs() > TOL * v_scale {
                None
            } else {
                Some(v.second_derivative(0.0))
            }
        } else {
            Some(v.derivative(s) / s)
        };
        ratio_max = match (ratio_max, ratio) {
            (Some(m), Some(r)) if r.is_finite() => Some(m.max(r)),
            _ => None,
        };
    }
    let v_prime_bounds = matches!(ratio_max, Some(m) if m < 0.0);

    let f2: Vec<f64> = pts.iter().map(|&s| flux_second_derivative(v, s)).collect();
    let curvature = classify_curvature(&f2);
    let flux_strict_convexity = curvature != Curvature::Neither;
    let oleinik_constant = if flux_strict_convexity {
        f2.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
    } else {
        0.0
    };
    let f2_scale = f2.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let oleinik_uniform = flux_strict_convexity && oleinik_constant > TOL * f2_scale;

    Ok(ConditionReport {
        q_lo,
        q_hi,
        samples: pts.len(),
        velocity_admissible,
        tv_bound,
        tv_bound_worst,
        v_prime_bounds,
        v_prime_ratio_max: ratio_max,
        flux_curvature: curvature,
        flux_strict_convexity,
        oleinik_constant,
        oleinik_uniform,
    })
}
