use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LinearForwardModel, ModelKind, Operator};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Discretisation of `v_t = v_xx + f(x)` on `(0, r)` with zero Dirichlet ends
/// and `v(x, 0) = sin(πx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatParams {
    /// Interior nodes.
    pub nodes: usize,
    /// Time steps.
    pub steps: usize,
    pub final_time: f64,
    pub length: f64,
    /// Implicitness weight; 0.5 is Crank–Nicolson.
    pub weight: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            nodes: 150,
            steps: 120,
            final_time: 1.0,
            length: 12.0,
            weight: 0.5,
        }
    }
}

impl HeatParams {
    pub fn dx(&self) -> f64 {
        self.length / (self.nodes + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    /// Interior nodes `x_j = j Δx`, `j = 1..=d`, as cell midpoints.
    pub fn grid(&self) -> Result<Grid> {
        let dx = self.dx();
        Grid::line(dx / 2.0, self.length - dx / 2.0, self.nodes)
    }

    /// Parameters for the grid with half the spacing (`2d + 1` interior nodes).
    /// Coarse node `j` is fine node `2j + 1` (0-based).
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes + 1,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.steps == 0 {
            return Err(Error::Domain("heat model needs d ≥ 2 and N ≥ 1".into()));
        }
        if !(self.final_time > 0.0 && self.length > 0.0) {
            return Err(Error::Domain("final time and length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::Domain(format!("weight {} outside [0, 1]", self.weight)));
        }
        Ok(())
    }
}

/// Pieces of the discrete propagator, exposed for testing.
pub(crate) struct HeatMatrices {
    pub d_plus: DMatrix<f64>,
    pub d_minus: DMatrix<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub laplacian: DMatrix<f64>,
}

pub(crate) fn heat_matrices(p: &HeatParams) -> HeatMatrices {
    let d = p.nodes;
    let dx2 = p.dx() * p.dx();
    let laplacian = DMatrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
        0 => -2.0 / dx2,
        1 => 1.0 / dx2,
        _ => 0.0,
    });
    let inv_dt = DMatrix::identity(d, d) / p.dt();
    HeatMatrices {
        d_plus: &inv_dt - &laplacian * p.weight,
        d_minus: &inv_dt + &laplacian * (1.0 - p.weight),
        laplacian,
    }
}

/// Source-to-final-temperature model `y = H f + D^N V₀`, with
/// `H = Σ_{i<N} D^i D₊⁻¹`, `D = D₊⁻¹ D₋`. The offset is stored on the model.
pub fn heat_source_model(p: &HeatParams) -> Result<LinearForwardModel> {
    p.validate()?;
    let grid = p.grid()?;
    let m = heat_matrices(p);
    let lu = m.d_plus.clone().lu();
    let p_inv = lu.try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let d_step = &p_inv * &m.d_minus;

    let mut term = p_inv.clone();
    let mut h = p_inv;
    for _ in 1..p.steps {
        term = &d_step * &term;
        h += &term;
    }

    let mut v = DVector::from_iterator(
        p.nodes,
        (1..=p.nodes).map(|j| (std::f64::consts::PI * j as f64 * p.dx()).sin()),
    );
    for _ in 0..p.steps {
        v = &d_step * v;
    }

    LinearForwardModel::new(Operator::Dense(h), 1.0, grid, ModelKind::HeatSource)?
        .with_offset(v.as_slice().to_vec())
}
