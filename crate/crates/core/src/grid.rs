//! Uniform 1D/2D grids and the fields that live on them.
//!
//! Grid points sit at cell midpoints `a + (i + 1/2) h` with `h = (b - a) / cells`.
//! 2D fields are stored row-major: axis 0 indexes rows (slow), axis 1 indexes
//! columns (fast), so value `(r, c)` lives at `r * cols + c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One axis of a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    /// Midpoint coordinate of cell `i`.
    pub fn coordinate(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.spacing()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct Grid {
    axes: Vec<Axis>,
}

impl TryFrom<Vec<Axis>> for Grid {
    type Error = Error;

    fn try_from(axes: Vec<Axis>) -> Result<Self> {
        Grid::new(axes)
    }
}

impl From<Grid> for Vec<Axis> {
    fn from(grid: Grid) -> Self {
        grid.axes
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "expected 1 or 2 axes, got {}",
                axes.len()
            )));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.cells < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} has {} points, need at least 2",
                    ax.cells
                )));
            }
            if !(ax.lower.is_finite() && ax.upper.is_finite()) || ax.upper <= ax.lower {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} has empty extent [{}, {}]",
                    ax.lower, ax.upper
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::new(vec![Axis {
            lower,
            upper,
            cells,
        }])
    }

    /// Square 2D grid `[lower, upper]^2` with `pixels x pixels` cells.
    pub fn square(lower: f64, upper: f64, pixels: usize) -> Result<Self> {
        let ax = Axis {
            lower,
            upper,
            cells: pixels,
        };
        Self::new(vec![ax, ax])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cells).collect()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn max_axis_len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).max().unwrap_or(0)
    }

    /// Grid with every axis refined by `factor`.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.axes
                .iter()
                .map(|a| Axis {
                    cells: a.cells * factor,
                    ..*a
                })
                .collect(),
        )
    }

    /// Grid with every axis coarsened by `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::IncompatibleRefinement { factor, len: 0 });
        }
        let mut axes = Vec::with_capacity(self.axes.len());
        for a in &self.axes {
            if a.cells % factor != 0 {
                return Err(Error::IncompatibleRefinement {
                    factor,
                    len: a.cells,
                });
            }
            axes.push(Axis {
                cells: a.cells / factor,
                ..*a
            });
        }
        Self::new(axes)
    }

    /// Midpoint coordinates of flat index `idx`, one entry per axis.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.axes.as_slice() {
            [ax] => vec![ax.coordinate(idx)],
            [rows, cols] => vec![
                rows.coordinate(idx / cols.cells),
                cols.coordinate(idx % cols.cells),
            ],
            _ => unreachable!("grid has 1 or 2 axes"),
        }
    }

    /// Coordinates of a 1D grid.
    pub fn coordinates(&self) -> Vec<f64> {
        let ax = &self.axes[0];
        (0..ax.cells).map(|i| ax.coordinate(i)).collect()
    }
}

/// A discretized real-valued function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    /// Build a 2D field from rows (row-major).
    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(grid, rows.concat())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major value vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn unflatten(grid: &Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid.clone(), values.to_vec())
    }

    /// Rows of a 2D field (a 1D field is one row).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let cols = *self.grid.shape().last().unwrap();
        self.values.chunks(cols).map(<[f64]>::to_vec).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Block-mean coarsening: each coarse value is the mean of the
    /// `factor^dim` fine values it covers.
    pub fn downsample(&self, factor: usize) -> Result<Field> {
        let coarse = self.grid.coarsen(factor)?;
        let values = match self.grid.shape().as_slice() {
            [_] => self
                .values
                .chunks(factor)
                .map(|c| c.iter().sum::<f64>() / factor as f64)
                .collect(),
            [_, fine_cols] => {
                let shape = coarse.shape();
                let (rows, cols) = (shape[0], shape[1]);
                let norm = (factor * factor) as f64;
                let mut out = vec![0.0; rows * cols];
                for (r, row) in out.chunks_mut(cols).enumerate() {
                    for (c, v) in row.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for fr in r * factor..(r + 1) * factor {
                            let base = fr * fine_cols;
                            acc += self.values[base + c * factor..base + (c + 1) * factor]
                                .iter()
                                .sum::<f64>();
                        }
                        *v = acc / norm;
                    }
                }
                out
            }
            _ => unreachable!(),
        };
        Field::new(coarse, values)
    }

    /// Values along row `r` of a 2D field.
    pub fn row(&self, r: usize) -> Vec<f64> {
        let cols = *self.grid.shape().last().unwrap();
        self.values[r * cols..(r + 1) * cols].to_vec()
    }

    /// Values along column `c` of a 2D field.
    pub fn column(&self, c: usize) -> Vec<f64> {
        let shape = self.grid.shape();
        let cols = shape[1];
        (0..shape[0]).map(|r| self.values[r * cols + c]).collect()
    }
}
