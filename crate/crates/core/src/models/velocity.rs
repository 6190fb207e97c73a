use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

/// Velocity law `V` with its first two derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum VelocityModel {
    /// `V_max (1 - (s/q_max)^k)`
    Greenshields {
        k: u32,
        #[serde(default = "one")]
        v_max: f64,
        #[serde(default = "one")]
        q_max: f64,
    },
    /// `V_max (1 - s/q_max)`
    Linear {
        #[serde(default = "one")]
        v_max: f64,
        #[serde(default = "one")]
        q_max: f64,
    },
    /// `V_max (1 - (s/q_max)^2)`, concave.
    Quadratic {
        #[serde(default = "one")]
        v_max: f64,
        #[serde(default = "one")]
        q_max: f64,
    },
    /// `V_max (1 - s/q_max)^2`, convex.
    ConvexQuadratic {
        #[serde(default = "one")]
        v_max: f64,
        #[serde(default = "one")]
        q_max: f64,
    },
    /// `sum_i coefficients[i] s^i`
    Polynomial { coefficients: Vec<f64> },
}

impl VelocityModel {
    pub fn linear() -> Self {
        Self::Linear {
            v_max: 1.0,
            q_max: 1.0,
        }
    }

    pub fn quadratic() -> Self {
        Self::Quadratic {
            v_max: 1.0,
            q_max: 1.0,
        }
    }

    pub fn convex_quadratic() -> Self {
        Self::ConvexQuadratic {
            v_max: 1.0,
            q_max: 1.0,
        }
    }

    pub fn greenshields(k: u32, v_max: f64, q_max: f64) -> Self {
        Self::Greenshields { k, v_max, q_max }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v_max: f64, q_max: f64| {
            if v_max > 0.0 && q_max > 0.0 && v_max.is_finite() && q_max.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidVelocity(format!(
                    "v_max and q_max must be positive, got {v_max}, {q_max}"
                )))
            }
        };
        match self {
            Self::Greenshields { k, v_max, q_max } => {
                if *k == 0 {
                    return Err(Error::InvalidVelocity(
                        "Greenshields exponent must be >= 1".into(),
                    ));
                }
                check(*v_max, *q_max)
            }
            Self::Linear { v_max, q_max }
            | Self::Quadratic { v_max, q_max }
            | Self::ConvexQuadratic { v_max, q_max } => check(*v_max, *q_max),
            Self::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    Err(Error::InvalidVelocity(
                        "polynomial needs finite coefficients".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Maximal density, where the model defines one.
    pub fn q_max(&self) -> Option<f64> {
        match self {
            Self::Greenshields { q_max, .. }
            | Self::Linear { q_max, .. }
            | Self::Quadratic { q_max, .. }
            | Self::ConvexQuadratic { q_max, .. } => Some(*q_max),
            Self::Polynomial { .. } => None,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Greenshields { k, v_max, q_max } => v_max * (1.0 - (s / q_max).powi(*k as i32)),
            Self::Linear { v_max, q_max } => v_max * (1.0 - s / q_max),
            Self::Quadratic { v_max, q_max } => {
                let r = s / q_max;
                v_max * (1.0 - r * r)
            }
            Self::ConvexQuadratic { v_max, q_max } => {
                let r = 1.0 - s / q_max;
                v_max * r * r
            }
            Self::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Greenshields { k, v_max, q_max } => {
                let k = *k as i32;
                -v_max * k as f64 * (s / q_max).powi(k - 1) / q_max
            }
            Self::Linear { v_max, q_max } => -v_max / q_max,
            Self::Quadratic { v_max, q_max } => -2.0 * v_max * s / (q_max * q_max),
            Self::ConvexQuadratic { v_max, q_max } => -2.0 * v_max * (1.0 - s / q_max) / q_max,
            Self::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * s + i as f64 * c),
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        match self {
            Self::Greenshields { k, v_max, q_max } => {
                if *k < 2 {
                    return 0.0;
                }
                let k = *k as i32;
                -v_max * (k * (k - 1)) as f64 * (s / q_max).powi(k - 2) / (q_max * q_max)
            }
            Self::Linear { .. } => 0.0,
            Self::Quadratic { v_max, q_max } => -2.0 * v_max / (q_max * q_max),
            Self::ConvexQuadratic { v_max, q_max } => 2.0 * v_max / (q_max * q_max),
            Self::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * s + (i * (i - 1)) as f64 * c),
        }
    }

    /// `max |V'|` over `[lo, hi]` by dense sampling plus endpoints.
    pub fn max_abs_derivative(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        sample(lo, hi, samples)
            .map(|s| self.derivative(s).abs())
            .fold(0.0, f64::max)
    }
}

/// `samples` equispaced points on `[lo, hi]` including both endpoints.
pub(crate) fn sample(lo: f64, hi: f64, samples: usize) -> impl Iterator<Item = f64> {
    let n = samples.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i == n - 1 { hi } else { lo + i as f64 * h })
}
