use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Deconvolution,
    HeatSource,
}

impl TruthKind {
    pub fn domain(self) -> (f64, f64) {
        match self {
            TruthKind::Deconvolution => (0.0, 1.0),
            TruthKind::HeatSource => (0.0, 12.0),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TruthKind::Deconvolution => deconvolution_source(x),
            TruthKind::HeatSource => heat_source(x),
        }
    }
}

fn deconvolution_source(x: f64) -> f64 {
    if (0.1..0.25).contains(&x) {
        0.5
    } else if (0.35..0.4).contains(&x) {
        0.25
    } else if (0.5..1.0).contains(&x) {
        (2.0 * std::f64::consts::PI * x).sin().powi(4)
    } else {
        0.0
    }
}

fn heat_source(x: f64) -> f64 {
    if (0.75..2.0).contains(&x) {
        0.5
    } else if (3.0..5.0).contains(&x) {
        -(x - 3.0) * (x - 5.0)
    } else if (5.0..6.0).contains(&x) {
        x - 5.0
    } else if (6.0..7.0).contains(&x) {
        -x + 7.0
    } else if (7.0..9.0).contains(&x) {
        -(x - 7.0) * (x - 9.0)
    } else if (10.0..11.25).contains(&x) {
        0.5
    } else {
        0.0
    }
}

/// Piecewise benchmark source evaluated at the grid points. The grid must lie
/// inside the kind's domain and span more than half of it.
pub fn benchmark_truth(kind: TruthKind, grid: &Grid) -> Result<Field> {
    if grid.dim() != 1 {
        return Err(Error::Domain("benchmark sources are one-dimensional".into()));
    }
    let (lo, hi) = kind.domain();
    let ax = &grid.axes()[0];
    let tol = 1e-9 * (hi - lo);
    if ax.lower < lo - tol || ax.upper > hi + tol || ax.upper - ax.lower < 0.5 * (hi - lo) {
        return Err(Error::Domain(format!(
            "grid [{}, {}] does not match domain [{lo}, {hi}]",
            ax.lower, ax.upper
        )));
    }
    Field::from_fn(grid.clone(), |p| kind.eval(p[0]))
}
