use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};

/// Initial density profiles. Rasterization takes exact cell averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitialDatum {
    Constant {
        value: f64,
    },
    /// `base + height * χ_[a,b]`
    Box {
        base: f64,
        height: f64,
        a: f64,
        b: f64,
    },
    /// `q_l` for `x < x0`, `q_r` for `x > x0`.
    Riemann {
        q_l: f64,
        q_r: f64,
        x0: f64,
    },
    /// `q_l` left of `x_a`, `q_r` right of `x_b`, linear in between.
    Ramp {
        q_l: f64,
        q_r: f64,
        x_a: f64,
        x_b: f64,
    },
    /// `values[i]` on `(breakpoints[i-1], breakpoints[i])`, with
    /// `values.len() == breakpoints.len() + 1`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Linear piece `v0 + (v1 - v0) (x - x0)/(x1 - x0)` on `[x0, x1]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    x0: f64,
    x1: f64,
    v0: f64,
    v1: f64,
}

impl Piece {
    fn at(&self, x: f64) -> f64 {
        if self.v0 == self.v1 {
            self.v0
        } else {
            self.v0 + (self.v1 - self.v0) * (x - self.x0) / (self.x1 - self.x0)
        }
    }
}

/// Pieces and breakpoints resolved once for repeated evaluation.
struct Profile {
    left: f64,
    pieces: Vec<Piece>,
    right: f64,
    breakpoints: Vec<f64>,
}

impl Profile {
    fn new(d: &InitialDatum) -> Self {
        let (left, pieces, right) = d.pieces();
        Self {
            left,
            pieces,
            right,
            breakpoints: d.breakpoints(),
        }
    }

    fn at(&self, x: f64) -> f64 {
        if self.breakpoints.first().is_none_or(|&b| x < b) {
            return self.left;
        }
        self.pieces
            .iter()
            .find(|p| x >= p.x0 && x < p.x1)
            .map(|p| p.at(x))
            .unwrap_or(self.right)
    }
}

impl InitialDatum {
    pub fn box_datum(base: f64, height: f64, a: f64, b: f64) -> Self {
        Self::Box { base, height, a, b }
    }

    pub fn riemann(q_l: f64, q_r: f64, x0: f64) -> Self {
        Self::Riemann { q_l, q_r, x0 }
    }

    /// The box datum `1/4 + 1/2 χ_[-0.5, 0.5]` used throughout the experiments.
    pub fn standard_box() -> Self {
        Self::box_datum(0.25, 0.5, -0.5, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            Self::Constant { value } => finite(&[*value]),
            Self::Box { base, height, a, b } => finite(&[*base, *height, *a, *b]) && a < b,
            Self::Riemann { q_l, q_r, x0 } => finite(&[*q_l, *q_r, *x0]),
            Self::Ramp { q_l, q_r, x_a, x_b } => finite(&[*q_l, *q_r, *x_a, *x_b]) && x_a < x_b,
            Self::PiecewiseConstant { breakpoints, values } => {
                finite(breakpoints)
                    && finite(values)
                    && values.len() == breakpoints.len() + 1
                    && breakpoints.windows(2).all(|w| w[0] < w[1])
            }
        };
        if !ok {
            return Err(Error::InvalidDatum(format!("{self:?}")));
        }
        let (lo, _) = self.range();
        if lo < 0.0 {
            return Err(Error::InvalidDatum(format!("negative density {lo}")));
        }
        Ok(())
    }

    fn pieces(&self) -> (f64, Vec<Piece>, f64) {
        let steps = |bps: &[f64], vals: &[f64]| -> Vec<Piece> {
            bps.windows(2)
                .zip(&vals[1..])
                .map(|(w, &v)| Piece {
                    x0: w[0],
                    x1: w[1],
                    v0: v,
                    v1: v,
                })
                .collect()
        };
        match self {
            Self::Constant { value } => (*value, vec![], *value),
            Self::Box { base, height, a, b } => {
                let top = base + height;
                (*base, steps(&[*a, *b], &[*base, top, *base]), *base)
            }
            Self::Riemann { q_l, q_r, .. } => (*q_l, vec![], *q_r),
            Self::Ramp { q_l, q_r, x_a, x_b } => (
                *q_l,
                vec![Piece {
                    x0: *x_a,
                    x1: *x_b,
                    v0: *q_l,
                    v1: *q_r,
                }],
                *q_r,
            ),
            Self::PiecewiseConstant { breakpoints, values } => {
                (values[0], steps(breakpoints, values), *values.last().unwrap())
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Riemann { x0, .. } => vec![*x0],
            _ => {
                let (_, pieces, _) = self.pieces();
                let mut b: Vec<f64> = pieces.iter().flat_map(|p| [p.x0, p.x1]).collect();
                b.dedup();
                b
            }
        }
    }

    /// Point value; at a breakpoint the right limit is returned.
    pub fn evaluate(&self, x: f64) -> f64 {
        Profile::new(self).at(x)
    }

    /// Extension values at `-∞` and `+∞`.
    pub fn extension(&self) -> (f64, f64) {
        let (l, _, r) = self.pieces();
        (l, r)
    }

    /// Essential infimum and supremum.
    pub fn range(&self) -> (f64, f64) {
        let (l, pieces, r) = self.pieces();
        pieces
            .iter()
            .flat_map(|p| [p.v0, p.v1])
            .chain([l, r])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Exact cell averages on `grid`.
    pub fn rasterize(&self, grid: &GridSpec) -> Result<CellField> {
        self.validate()?;
        let profile = Profile::new(self);
        let bps = &profile.breakpoints;
        let values = (0..grid.n_cells())
            .map(|j| {
                let (a, b) = (grid.interface(j), grid.interface(j + 1));
                // piecewise linear between breakpoints: split the cell there
                // and integrate each part by its midpoint value
                let inside = &bps[bps.partition_point(|&x| x <= a)..bps.partition_point(|&x| x < b)];
                if inside.is_empty() {
                    return profile.at(0.5 * (a + b));
                }
                let mut total = 0.0;
                let mut lo = a;
                for &hi in inside.iter().chain([&b]) {
                    total += (hi - lo) * profile.at(0.5 * (lo + hi));
                    lo = hi;
                }
                total / (b - a)
            })
            .collect();
        CellField::new(*grid, values, self.extension())
    }

    /// Whether the datum is monotone, and in which direction.
    pub fn monotone_direction(&self) -> Option<crate::grid::Direction> {
        use crate::grid::Direction;
        let (l, pieces, r) = self.pieces();
        let seq: Vec<f64> = std::iter::once(l)
            .chain(pieces.iter().flat_map(|p| [p.v0, p.v1]))
            .chain(std::iter::once(r))
            .collect();
        if seq.windows(2).all(|w| w[1] >= w[0]) {
            Some(Direction::Increasing)
        } else if seq.windows(2).all(|w| w[1] <= w[0]) {
            Some(Direction::Decreasing)
        } else {
            None
        }
    }
}
