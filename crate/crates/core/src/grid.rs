//! Uniform grid on [0, 1] and sampled functions on it.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 8;

/// Uniform partition of [0, 1] into `n_cells` cells of width `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct Grid {
    n_cells: usize,
    h: f64,
}

/// Serialized form of a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub n_cells: usize,
}

impl TryFrom<GridParams> for Grid {
    type Error = GridError;

    fn try_from(p: GridParams) -> Result<Self, Self::Error> {
        Grid::new(p.n_cells)
    }
}

impl From<Grid> for GridParams {
    fn from(g: Grid) -> Self {
        GridParams { n_cells: g.n_cells }
    }
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self, GridError> {
        if n_cells < MIN_CELLS {
            return Err(GridError::TooFewCells {
                n_cells,
                min: MIN_CELLS,
            });
        }
        Ok(Self {
            n_cells,
            h: 1.0 / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of nodes, `n_cells + 1`.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i`.
    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_cells {
            1.0
        } else {
            i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.x(i))
    }

    /// Index of the cell `[x_i, x_{i+1}]` containing `x`, clamped to the grid.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = (x / self.h).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.n_cells - 1)
        }
    }

    /// Node closest to `x`.
    pub fn nearest_node(&self, x: f64) -> usize {
        let i = (x / self.h).round();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.n_cells)
        }
    }
}

/// Values of a function sampled at every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    /// Samples `f` and then forces the two boundary values to zero.
    pub fn dirichlet_from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let mut g = Self::from_fn(grid, f);
        g.values[0] = 0.0;
        g.values[grid.n_cells()] = 0.0;
        g
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(
            self.grid, other.grid,
            "grid functions live on different grids"
        );
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// True when both boundary values are exactly zero.
    pub fn is_dirichlet(&self) -> bool {
        self.values[0] == 0.0 && self.values[self.grid.n_cells()] == 0.0
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Trapezoidal approximation of the L²(0,1) norm.
    pub fn l2_norm(&self) -> f64 {
        let n = self.grid.n_cells();
        let sum: f64 = self.values.iter().map(|v| v * v).sum::<f64>()
            - 0.5 * (self.values[0].powi(2) + self.values[n].powi(2));
        (self.grid.h() * sum.max(0.0)).sqrt()
    }

    pub fn l2_distance(&self, other: &GridFunction) -> f64 {
        (self - other).l2_norm()
    }

    /// Discrete H¹ seminorm from forward differences.
    pub fn h1_seminorm(&self) -> f64 {
        let h = self.grid.h();
        let sum: f64 = self
            .values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h).powi(2))
            .sum();
        (sum * h).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_interior(&self, i: usize) -> Result<(), GridError> {
        if i == 0 || i >= self.grid.n_cells() {
            return Err(GridError::NotInterior {
                index: i,
                n_cells: self.grid.n_cells(),
            });
        }
        Ok(())
    }

    /// `(f_{i-1} - 2 f_i + f_{i+1}) / h²` at an interior node.
    pub fn second_difference(&self, i: usize) -> Result<f64, GridError> {
        self.check_interior(i)?;
        let h = self.grid.h();
        Ok((self.values[i - 1] - 2.0 * self.values[i] + self.values[i + 1]) / (h * h))
    }

    /// `(f_{i+1} - f_{i-1}) / 2h` at an interior node.
    pub fn central_difference(&self, i: usize) -> Result<f64, GridError> {
        self.check_interior(i)?;
        Ok((self.values[i + 1] - self.values[i - 1]) / (2.0 * self.grid.h()))
    }

    /// Piecewise-linear interpolant evaluated at `x ∈ [0, 1]`.
    pub fn interpolate(&self, x: f64) -> f64 {
        let i = self.grid.cell_of(x);
        let s = (x - self.grid.x(i)) / self.grid.h();
        self.values[i] * (1.0 - s) + self.values[i + 1] * s
    }

    /// Rows `x,value` with a header, every number printed with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.grid.nodes().zip(&self.values) {
            let _ = writeln!(out, "{x:.16e},{v:.16e}");
        }
        out
    }

    /// Parses the output of [`GridFunction::to_csv`]. The grid is inferred from the row count.
    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64, GridError> {
                s.and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| GridError::Parse {
                        line: lineno + 1,
                        content: line.to_owned(),
                    })
            };
            let _x = parse(parts.next())?;
            values.push(parse(parts.next())?);
        }
        if values.len() < 2 {
            return Err(GridError::TooFewCells {
                n_cells: values.len().saturating_sub(1),
                min: MIN_CELLS,
            });
        }
        let grid = Grid::new(values.len() - 1)?;
        Self::from_values(grid, values)
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;

    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;

    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;

    fn mul(self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }
}
