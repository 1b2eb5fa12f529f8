//! Linear observation operators and synthetic data generation.

mod convolution;
mod heat;
mod phantom;
mod radon;
mod truth;

pub use convolution::convolution_model;
pub use heat::{heat_source_model, HeatParams};
pub use phantom::{shepp_logan, textured_image, Ellipse, SheppLoganSpec};
pub use radon::{fbp, radon_model, ray_cell_lengths, ray_interpolation, RayGeometry};
pub use truth::{benchmark_truth, TruthKind};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{seeded_rng, standard_normal_vec};
use crate::grid::{Field, Grid};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            for (c, v) in self.row(i) {
                out[c] += v * yi;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }

    /// Dense `AᵀA`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.ncols, self.ncols);
        for i in 0..self.nrows {
            let row: Vec<(usize, f64)> = self.row(i).collect();
            for &(a, va) in &row {
                for &(b, vb) in &row {
                    g[(a, b)] += va * vb;
                }
            }
        }
        g
    }

    /// Diagonal of `AᵀA` (squared column norms).
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                g[j] += v * v;
            }
        }
        g
    }
}

/// Storage of a linear operator `A`.
#[derive(Debug, Clone)]
pub enum Operator {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
    Identity(usize),
}

impl Operator {
    pub fn nrows(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::Sparse(m) => m.nrows(),
            Operator::Identity(n) => *n,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Operator::Dense(m) => m.ncols(),
            Operator::Sparse(m) => m.ncols(),
            Operator::Identity(n) => *n,
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => {
                let (r, c) = m.shape();
                let mut out = vec![0.0; r];
                for j in 0..c {
                    let uj = u[j];
                    if uj == 0.0 {
                        continue;
                    }
                    for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
                        *o += a * uj;
                    }
                }
                out
            }
            Operator::Sparse(m) => m.mul_vec(u),
            Operator::Identity(_) => u.to_vec(),
        }
    }

    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => m
                .column_iter()
                .map(|col| col.iter().zip(r).map(|(a, b)| a * b).sum())
                .collect(),
            Operator::Sparse(m) => m.tr_mul_vec(r),
            Operator::Identity(_) => r.to_vec(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(m) => m.to_dense(),
            Operator::Identity(n) => DMatrix::identity(*n, *n),
        }
    }

    /// Dense `AᵀA`.
    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.tr_mul(m),
            Operator::Sparse(m) => m.gram(),
            Operator::Identity(n) => DMatrix::identity(*n, *n),
        }
    }

    pub fn gram_diagonal(&self) -> Vec<f64> {
        match self {
            Operator::Dense(m) => m.column_iter().map(|c| c.norm_squared()).collect(),
            Operator::Sparse(m) => m.gram_diagonal(),
            Operator::Identity(n) => vec![1.0; *n],
        }
    }

    /// Number of stored multiply-adds per application.
    pub fn cost(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows() * m.ncols(),
            Operator::Sparse(m) => m.nnz(),
            Operator::Identity(n) => *n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Deconvolution,
    HeatSource,
    Radon,
    Identity,
}

/// `y = A u (+ offset) + η`, `η ~ N(0, σ² I)`.
#[derive(Debug, Clone)]
pub struct LinearForwardModel {
    operator: Operator,
    sigma: f64,
    grid: Grid,
    kind: ModelKind,
    offset: Option<Vec<f64>>,
}

impl LinearForwardModel {
    pub fn new(operator: Operator, sigma: f64, grid: Grid, kind: ModelKind) -> Result<Self> {
        if operator.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: operator.ncols(),
            });
        }
        if operator.nrows() == 0 {
            return Err(Error::Domain("forward model needs at least one row".into()));
        }
        if let Operator::Dense(m) = &operator {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("forward matrix has non-finite entries".into()));
            }
        }
        let model = Self {
            operator,
            sigma: 1.0,
            grid,
            kind,
            offset: None,
        };
        model.with_sigma(sigma)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("noise level must be positive, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != self.operator.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.operator.nrows(),
                actual: offset.len(),
            });
        }
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    pub fn n_obs(&self) -> usize {
        self.operator.nrows()
    }

    pub fn dim(&self) -> usize {
        self.operator.ncols()
    }

    /// `A u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.operator.apply(u)
    }

    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        self.operator.apply_transpose(r)
    }

    /// Noise-free observation `A u + offset`.
    pub fn observe(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.apply(u);
        if let Some(b) = &self.offset {
            y.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        }
        y
    }
}

/// `A = I` on the given grid.
pub fn identity_model(grid: Grid, sigma: f64) -> Result<LinearForwardModel> {
    let n = grid.len();
    LinearForwardModel::new(Operator::Identity(n), sigma, grid, ModelKind::Identity)
}

/// Linear map from fine-grid observations to the coarse observation set.
#[derive(Debug, Clone)]
pub enum Restriction {
    Identity,
    /// Block mean over `factor^dim` cells of the given fine grid.
    BlockMean { grid: Grid, factor: usize },
    /// Keep `fine[offset + stride * i]`.
    Subsample {
        stride: usize,
        offset: usize,
        count: usize,
    },
    Matrix(CsrMatrix),
}

impl Restriction {
    pub fn apply(&self, fine: &[f64]) -> Result<Vec<f64>> {
        match self {
            Restriction::Identity => Ok(fine.to_vec()),
            Restriction::BlockMean { grid, factor } => {
                Ok(Field::new(grid.clone(), fine.to_vec())?
                    .downsample(*factor)?
                    .into_values())
            }
            Restriction::Subsample {
                stride,
                offset,
                count,
            } => (0..*count)
                .map(|i| {
                    fine.get(offset + stride * i)
                        .copied()
                        .ok_or(Error::DimensionMismatch {
                            expected: offset + stride * i + 1,
                            actual: fine.len(),
                        })
                })
                .collect(),
            Restriction::Matrix(m) => {
                if m.ncols() != fine.len() {
                    return Err(Error::DimensionMismatch {
                        expected: m.ncols(),
                        actual: fine.len(),
                    });
                }
                Ok(m.mul_vec(fine))
            }
        }
    }
}

/// Synthetic observations with noise relative to the maximum fine-grid output.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub y: Vec<f64>,
    pub clean: Vec<f64>,
    pub sigma: f64,
}

/// Apply the fine model to the fine truth, restrict to the coarse observation
/// set and add `N(0, σ²)` noise with `σ = noise_percent · max|A_fine truth| / 100`.
pub fn generate_data(
    fine_model: &LinearForwardModel,
    truth: &Field,
    restriction: &Restriction,
    noise_percent: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if !(noise_percent >= 0.0 && noise_percent.is_finite()) {
        return Err(Error::Domain(format!(
            "noise percent must be nonnegative, got {noise_percent}"
        )));
    }
    let peak = fine_output(fine_model, truth)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    generate_data_with_sigma(fine_model, truth, restriction, noise_percent * peak / 100.0, seed)
}

/// As [`generate_data`] with an absolute noise level.
pub fn generate_data_with_sigma(
    fine_model: &LinearForwardModel,
    truth: &Field,
    restriction: &Restriction,
    sigma: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    let clean = restriction.apply(&fine_output(fine_model, truth)?)?;
    let mut rng = seeded_rng(seed, 1);
    let noise = standard_normal_vec(&mut rng, clean.len());
    let y = clean.iter().zip(&noise).map(|(c, z)| c + sigma * z).collect();
    Ok(SyntheticData { y, clean, sigma })
}

fn fine_output(fine_model: &LinearForwardModel, truth: &Field) -> Result<Vec<f64>> {
    if truth.len() != fine_model.dim() {
        return Err(Error::DimensionMismatch {
            expected: fine_model.dim(),
            actual: truth.len(),
        });
    }
    Ok(fine_model.observe(truth.values()))
}
