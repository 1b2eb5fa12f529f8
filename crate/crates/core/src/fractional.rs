//! Grünwald-discretized fractional gradients and the fractional total
//! variation (FTV) seminorm.
//!
//! Along each axis, at grid index `l` with spacing `h`:
//!
//! ```text
//! 0 < α ≤ 1:  g_l = (Σ_j ϖ_j u[l-j]   - Σ_j ϖ_j u[l+j])   / (2 h^α)
//! 1 < α ≤ 2:  g_l = (Σ_j ϖ_j u[l-j+1] - Σ_j ϖ_j u[l+j-1]) / (2 h^α)
//! ```
//!
//! with `ϖ_0 = 1`, `ϖ_j = (1 - (α+1)/j) ϖ_{j-1}`. Indices that fall outside the
//! grid contribute zero. In 2D the operator is applied along rows and columns
//! separately and the cell magnitude is the Euclidean norm of the two
//! components.

use crate::error::{Error, Result};
use crate::grid::Field;

/// Default smoothing used by the differentiable FTV surrogate.
pub const DEFAULT_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GrunwaldWeights {
    alpha: f64,
    weights: Vec<f64>,
    shifted: bool,
}

impl GrunwaldWeights {
    pub fn new(alpha: f64, count: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Domain(format!(
                "fractional order {alpha} outside (0, 2]"
            )));
        }
        if count == 0 {
            return Err(Error::Domain("weight count must be positive".into()));
        }
        let mut weights = Vec::with_capacity(count);
        weights.push(1.0);
        for j in 1..count {
            let prev = weights[j - 1];
            weights.push((1.0 - (alpha + 1.0) / j as f64) * prev);
        }
        Ok(Self {
            alpha,
            weights,
            shifted: alpha > 1.0,
        })
    }

    /// Weights sized for every axis of a grid with longest axis `max_axis_len`.
    pub fn for_axis_len(alpha: f64, max_axis_len: usize) -> Result<Self> {
        Self::new(alpha, max_axis_len + 1)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shifted(&self) -> bool {
        self.shifted
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn shift(&self) -> usize {
        usize::from(self.shifted)
    }
}

pub fn grunwald_weights(alpha: f64, count: usize) -> Result<GrunwaldWeights> {
    GrunwaldWeights::new(alpha, count)
}

/// Which grid indices carry a gradient value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Gradient at interior indices `1..n-1` only; endpoints contribute zero.
    #[default]
    Interior,
    /// Gradient at every index, with the field extended by zero outside the grid.
    ZeroExtended,
}

impl Boundary {
    fn range(self, n: usize) -> std::ops::Range<usize> {
        match self {
            Boundary::Interior => 1..n.saturating_sub(1),
            Boundary::ZeroExtended => 0..n,
        }
    }
}

/// Discrete fractional gradient operator together with its FTV seminorm.
#[derive(Debug, Clone, PartialEq)]
pub struct FtvOperator {
    weights: GrunwaldWeights,
    boundary: Boundary,
}

impl FtvOperator {
    pub fn new(weights: GrunwaldWeights, boundary: Boundary) -> Self {
        Self { weights, boundary }
    }

    pub fn weights(&self) -> &GrunwaldWeights {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.weights.alpha
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn check(&self, shape: &[usize]) -> Result<()> {
        let need = shape.iter().copied().max().unwrap_or(0) + 1;
        if self.weights.len() < need {
            return Err(Error::Domain(format!(
                "need at least {need} Grünwald weights, have {}",
                self.weights.len()
            )));
        }
        Ok(())
    }

    /// 1D pass: `out[l] = (left - right) * scale` over the active index range.
    fn line_forward(&self, line: &[f64], scale: f64, out: &mut [f64]) {
        let n = line.len();
        let s = self.weights.shift();
        let w = &self.weights.weights;
        out.iter_mut().for_each(|o| *o = 0.0);
        for l in self.boundary.range(n) {
            // left: idx = l + s - j, 0 <= idx < n
            let j_lo = (l + s).saturating_sub(n - 1);
            let mut left = 0.0;
            for j in j_lo..=(l + s) {
                left += w[j] * line[l + s - j];
            }
            // right: idx = l + j - s, 0 <= idx < n
            let j_lo = s.saturating_sub(l);
            let mut right = 0.0;
            for j in j_lo..(n + s - l) {
                right += w[j] * line[l + j - s];
            }
            out[l] = (left - right) * scale;
        }
    }

    /// Adjoint of [`Self::line_forward`], accumulated into `out`.
    fn line_adjoint(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        let n = v.len();
        let s = self.weights.shift();
        let w = &self.weights.weights;
        for l in self.boundary.range(n) {
            let c = v[l] * scale;
            if c == 0.0 {
                continue;
            }
            let j_lo = (l + s).saturating_sub(n - 1);
            for j in j_lo..=(l + s) {
                out[l + s - j] += c * w[j];
            }
            let j_lo = s.saturating_sub(l);
            for j in j_lo..(n + s - l) {
                out[l + j - s] -= c * w[j];
            }
        }
    }

    fn scales(&self, spacing: &[f64]) -> Vec<f64> {
        spacing
            .iter()
            .map(|h| 1.0 / (2.0 * h.powf(self.weights.alpha)))
            .collect()
    }

    /// Gradient components of a flat field, one vector per axis.
    pub fn gradient_values(&self, shape: &[usize], spacing: &[f64], u: &[f64]) -> Vec<Vec<f64>> {
        let scales = self.scales(spacing);
        match shape {
            [n] => {
                let mut g = vec![0.0; *n];
                self.line_forward(u, scales[0], &mut g);
                vec![g]
            }
            [rows, cols] => {
                let (rows, cols) = (*rows, *cols);
                // axis 1: along each row
                let mut g1 = vec![0.0; rows * cols];
                for (line, out) in u.chunks(cols).zip(g1.chunks_mut(cols)) {
                    self.line_forward(line, scales[1], out);
                }
                // axis 0: along each column
                let mut g0 = vec![0.0; rows * cols];
                let mut col = vec![0.0; rows];
                let mut out = vec![0.0; rows];
                for c in 0..cols {
                    for r in 0..rows {
                        col[r] = u[r * cols + c];
                    }
                    self.line_forward(&col, scales[0], &mut out);
                    for r in 0..rows {
                        g0[r * cols + c] = out[r];
                    }
                }
                vec![g0, g1]
            }
            _ => unreachable!("grids have 1 or 2 axes"),
        }
    }

    /// Adjoint of [`Self::gradient_values`].
    pub fn adjoint_values(&self, shape: &[usize], spacing: &[f64], comps: &[Vec<f64>]) -> Vec<f64> {
        let scales = self.scales(spacing);
        match shape {
            [n] => {
                let mut out = vec![0.0; *n];
                self.line_adjoint(&comps[0], scales[0], &mut out);
                out
            }
            [rows, cols] => {
                let (rows, cols) = (*rows, *cols);
                let mut out = vec![0.0; rows * cols];
                for (v, o) in comps[1].chunks(cols).zip(out.chunks_mut(cols)) {
                    self.line_adjoint(v, scales[1], o);
                }
                let mut col = vec![0.0; rows];
                let mut acc = vec![0.0; rows];
                for c in 0..cols {
                    for r in 0..rows {
                        col[r] = comps[0][r * cols + c];
                    }
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    self.line_adjoint(&col, scales[0], &mut acc);
                    for r in 0..rows {
                        out[r * cols + c] += acc[r];
                    }
                }
                out
            }
            _ => unreachable!("grids have 1 or 2 axes"),
        }
    }

    pub fn gradient(&self, u: &Field) -> Result<Vec<Field>> {
        let grid = u.grid();
        self.check(&grid.shape())?;
        self.gradient_values(&grid.shape(), &grid.spacing(), u.values())
            .into_iter()
            .map(|g| Field::new(grid.clone(), g))
            .collect()
    }

    /// Exact (nonsmooth) FTV seminorm of a flat field.
    pub fn norm_values(&self, shape: &[usize], spacing: &[f64], u: &[f64]) -> f64 {
        let vol: f64 = spacing.iter().product();
        let comps = self.gradient_values(shape, spacing, u);
        let sum: f64 = match comps.as_slice() {
            [g] => g.iter().map(|t| t.abs()).sum(),
            [g0, g1] => g0.iter().zip(g1).map(|(a, b)| a.hypot(*b)).sum(),
            _ => unreachable!(),
        };
        sum * vol
    }

    pub fn norm(&self, u: &Field) -> Result<f64> {
        let grid = u.grid();
        self.check(&grid.shape())?;
        Ok(self.norm_values(&grid.shape(), &grid.spacing(), u.values()))
    }

    /// Smoothed FTV `Σ vol (sqrt(|g|² + ε²) - ε)` and its gradient in `u`.
    pub fn smoothed_values(
        &self,
        shape: &[usize],
        spacing: &[f64],
        u: &[f64],
        eps: f64,
        want_grad: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let vol: f64 = spacing.iter().product();
        let mut comps = self.gradient_values(shape, spacing, u);
        let n = u.len();
        let mut value = 0.0;
        for i in 0..n {
            let sq: f64 = comps.iter().map(|g| g[i] * g[i]).sum();
            let r = (sq + eps * eps).sqrt();
            // sqrt(t² + ε²) - ε, written to avoid cancellation for small t
            value += sq / (r + eps);
            if want_grad {
                for g in comps.iter_mut() {
                    g[i] *= vol / r;
                }
            }
        }
        let grad = want_grad.then(|| self.adjoint_values(shape, spacing, &comps));
        (value * vol, grad)
    }

    pub fn norm_smoothed(&self, u: &Field, eps: f64) -> Result<f64> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::Domain(format!("smoothing must be positive, got {eps}")));
        }
        let grid = u.grid();
        self.check(&grid.shape())?;
        Ok(self
            .smoothed_values(&grid.shape(), &grid.spacing(), u.values(), eps, false)
            .0)
    }

    /// Gradient of the smoothed FTV with respect to the field values.
    pub fn smoothed_gradient(&self, u: &Field, eps: f64) -> Result<Vec<f64>> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::Domain(format!("smoothing must be positive, got {eps}")));
        }
        let grid = u.grid();
        self.check(&grid.shape())?;
        Ok(self
            .smoothed_values(&grid.shape(), &grid.spacing(), u.values(), eps, true)
            .1
            .unwrap())
    }
}

/// Fractional gradient with the default interior-index convention.
pub fn fractional_gradient(u: &Field, weights: &GrunwaldWeights) -> Result<Vec<Field>> {
    FtvOperator::new(weights.clone(), Boundary::Interior).gradient(u)
}

pub fn ftv_norm(u: &Field, weights: &GrunwaldWeights) -> Result<f64> {
    FtvOperator::new(weights.clone(), Boundary::Interior).norm(u)
}

pub fn ftv_norm_smoothed(u: &Field, weights: &GrunwaldWeights, eps: f64) -> Result<f64> {
    FtvOperator::new(weights.clone(), Boundary::Interior).norm_smoothed(u, eps)
}
