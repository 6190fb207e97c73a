//! Uniform 1-D meshes and piecewise-constant cell fields.
//!
//! The real line is truncated to `[x_min, x_max]`; outside the mesh a field
//! takes its constant boundary extension values. Total variation therefore
//! includes the jumps from the extensions into the first and last cells.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform mesh of `n_cells` cells on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRecord", into = "GridRecord")]
pub struct GridSpec {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
}

impl TryFrom<GridRecord> for GridSpec {
    type Error = Error;

    fn try_from(r: GridRecord) -> Result<Self> {
        GridSpec::new(r.x_min, r.x_max, r.n_cells)
    }
}

impl From<GridSpec> for GridRecord {
    fn from(g: GridSpec) -> Self {
        GridRecord {
            x_min: g.x_min,
            x_max: g.x_max,
            n_cells: g.n_cells,
        }
    }
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "x_min = {x_min} must be below x_max = {x_max}"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Center of cell `j`.
    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx()
    }

    /// Position of interface `k`; interface `k` is the left edge of cell `k`
    /// and `k = n_cells` is `x_max`.
    pub fn interface(&self, k: usize) -> f64 {
        if k == self.n_cells {
            self.x_max
        } else {
            self.x_min + k as f64 * self.dx()
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|j| self.center(j))
    }

    /// Index of the cell containing `x`, if `x` lies on the mesh.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.x_min || x > self.x_max {
            return None;
        }
        let j = ((x - self.x_min) / self.dx()).floor() as usize;
        Some(j.min(self.n_cells - 1))
    }

    /// True when `fine` partitions every cell of `self` into the same whole
    /// number of cells.
    pub fn refinement_ratio(&self, fine: &GridSpec) -> Option<usize> {
        if !fine.n_cells.is_multiple_of(self.n_cells) {
            return None;
        }
        let tol = 1e-12 * self.length().max(1.0);
        if (fine.x_min - self.x_min).abs() > tol || (fine.x_max - self.x_max).abs() > tol {
            return None;
        }
        Some(fine.n_cells / self.n_cells)
    }
}

/// Orientation for monotonicity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Cell averages on a [`GridSpec`] plus constant extensions to the left and
/// right of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: GridSpec,
    values: Vec<f64>,
    left: f64,
    right: f64,
}

impl CellField {
    pub fn new(grid: GridSpec, values: Vec<f64>, extension: (f64, f64)) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonfiniteState { time: 0.0, cell: j });
        }
        if !(extension.0.is_finite() && extension.1.is_finite()) {
            return Err(Error::InvalidGrid("extension values must be finite".into()));
        }
        Ok(Self {
            grid,
            values,
            left: extension.0,
            right: extension.1,
        })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
            left: c,
            right: c,
        }
    }

    /// Samples `f` at cell centers and uses `f(x_min)`, `f(x_max)` as extensions.
    pub fn from_centers(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.centers().map(&f).collect();
        Self::new(grid, values, (f(grid.x_min()), f(grid.x_max())))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn extension(&self) -> (f64, f64) {
        (self.left, self.right)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Replaces the cell values, keeping grid and extension.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid,
            values,
            left: self.left,
            right: self.right,
        }
    }

    /// Point evaluation of the piecewise-constant function on all of R.
    pub fn evaluate(&self, x: f64) -> f64 {
        if x < self.grid.x_min() {
            self.left
        } else if x >= self.grid.x_max() {
            self.right
        } else {
            self.values[self.grid.cell_of(x).unwrap_or(self.grid.n_cells() - 1)]
        }
    }

    /// Smallest and largest value over cells and extensions.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .chain([&self.left, &self.right])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Integral over the mesh, `sum(values) * dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// Exact cell averaging onto a coarser grid that `self.grid` refines.
    pub fn coarsen(&self, coarse: &GridSpec) -> Result<CellField> {
        let ratio = coarse.refinement_ratio(&self.grid).ok_or(Error::GridMismatch)?;
        let values = self
            .values
            .chunks_exact(ratio)
            .map(|c| c.iter().sum::<f64>() / ratio as f64)
            .collect();
        CellField::new(*coarse, values, self.extension())
    }

    /// CSV with header `x,value`, one row per cell center.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.centers().zip(&self.values) {
            writeln!(out, "{x},{v}")?;
        }
        Ok(())
    }
}

/// Sum of absolute jumps, including the jumps to both extension values.
pub fn total_variation(f: &CellField) -> f64 {
    sequence_variation(f.left, &f.values, f.right)
}

pub(crate) fn sequence_variation(left: f64, values: &[f64], right: f64) -> f64 {
    let interior: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let first = values.first().copied().unwrap_or(right);
    let last = values.last().copied().unwrap_or(left);
    interior + (first - left).abs() + (right - last).abs()
}

/// L1 distance of two fields over `window`, weighting each cell by its
/// overlap with the window.
pub fn l1_distance(f: &CellField, g: &CellField, window: (f64, f64)) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid;
    let (lo, hi) = window;
    let slack = 1e-12 * grid.length();
    if !(lo <= hi) || lo < grid.x_min() - slack || hi > grid.x_max() + slack {
        return Err(Error::InvalidInterval { lo, hi });
    }
    let first = grid.cell_of(lo.max(grid.x_min())).unwrap_or(0);
    let last = grid.cell_of(hi.min(grid.x_max())).unwrap_or(grid.n_cells() - 1);
    let mut total = 0.0;
    for j in first..=last {
        let a = grid.interface(j).max(lo);
        let b = grid.interface(j + 1).min(hi);
        if b > a {
            total += (f.values[j] - g.values[j]).abs() * (b - a);
        }
    }
    Ok(total)
}

/// Largest violation of discrete monotonicity in the given direction; zero
/// iff the cell values are monotone.
pub fn monotonicity_defect(f: &CellField, direction: Direction) -> f64 {
    sequence_defect(&f.values, direction)
}

/// [`monotonicity_defect`] restricted to cells whose centers lie in `window`.
pub fn monotonicity_defect_in(f: &CellField, direction: Direction, window: (f64, f64)) -> f64 {
    let grid = f.grid;
    let idx: Vec<usize> = (0..grid.n_cells())
        .filter(|&j| {
            let x = grid.center(j);
            x >= window.0 && x <= window.1
        })
        .collect();
    match (idx.first(), idx.last()) {
        (Some(&a), Some(&b)) => sequence_defect(&f.values[a..=b], direction),
        _ => 0.0,
    }
}

pub(crate) fn sequence_defect(values: &[f64], direction: Direction) -> f64 {
    values
        .windows(2)
        .map(|w| match direction {
            Direction::Increasing => w[0] - w[1],
            Direction::Decreasing => w[1] - w[0],
        })
        .fold(0.0, f64::max)
}
