//! Gaussian measures with cached Cholesky factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Deterministic RNG for a seed and a named stream.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum Covariance {
    /// Dense SPD matrix (already including any jitter) and its lower Cholesky factor.
    Dense {
        matrix: DMatrix<f64>,
        chol: DMatrix<f64>,
        jitter: f64,
    },
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    cov: Covariance,
}

/// Cholesky with the escalating diagonal jitter policy.
fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let d = matrix.nrows();
    if let Some(ch) = matrix.clone().cholesky() {
        return Ok((matrix.clone(), ch.l(), 0.0));
    }
    let scale = matrix.trace() / d as f64;
    let mut tau = JITTER_START;
    while tau <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = tau * scale;
        if jitter > 0.0 {
            let mut m = matrix.clone();
            for i in 0..d {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.clone().cholesky() {
                return Ok((m, ch.l(), jitter));
            }
        }
        tau *= 10.0;
    }
    Err(Error::NotSpd {
        max_jitter: JITTER_MAX * scale.max(0.0),
    })
}

impl GaussianMeasure {
    pub fn dense(mean: Vec<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != mean.len() || matrix.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: matrix.nrows(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd { max_jitter: 0.0 });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let (matrix, chol, jitter) = cholesky_with_jitter(&sym)?;
        Ok(Self {
            mean,
            cov: Covariance::Dense {
                matrix,
                chol,
                jitter,
            },
        })
    }

    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if variances.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: variances.len(),
            });
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::NotSpd { max_jitter: 0.0 });
        }
        Ok(Self {
            mean,
            cov: Covariance::Diagonal(variances),
        })
    }

    /// Zero-mean `N(0, variance * I)`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::diagonal(vec![0.0; dim], vec![variance; dim])
    }

    /// Zero-mean measure with kernel `γ exp(-((x1 - x2)/ν)² / 2)` on the points of a 1D grid.
    pub fn squared_exponential(grid: &Grid, gamma: f64, nu: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Unsupported(
                "squared-exponential covariance is only defined on 1D grids".into(),
            ));
        }
        if !(gamma > 0.0 && nu > 0.0) {
            return Err(Error::Domain(format!(
                "kernel parameters must be positive (gamma={gamma}, nu={nu})"
            )));
        }
        let x = grid.coordinates();
        let d = x.len();
        let matrix = DMatrix::from_fn(d, d, |i, j| {
            let r = (x[i] - x[j]) / nu;
            gamma * (-0.5 * r * r).exp()
        });
        Self::dense(vec![0.0; d], matrix)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.cov, Covariance::Diagonal(_))
    }

    /// Jitter added to the diagonal during factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        match &self.cov {
            Covariance::Dense { jitter, .. } => *jitter,
            Covariance::Diagonal(_) => 0.0,
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        match &self.cov {
            Covariance::Dense { matrix, .. } => matrix.diagonal().iter().copied().collect(),
            Covariance::Diagonal(v) => v.clone(),
        }
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Dense { matrix, .. } => matrix.clone(),
            Covariance::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
        }
    }

    /// Precision matrix `C⁻¹`.
    pub fn precision_matrix(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Dense { chol, .. } => {
                let d = chol.nrows();
                let mut inv = DMatrix::identity(d, d);
                solve_lower_in_place(chol, &mut inv);
                solve_upper_t_in_place(chol, &mut inv);
                (&inv + inv.transpose()) * 0.5
            }
            Covariance::Diagonal(v) => {
                DMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|x| 1.0 / x)))
            }
        }
    }

    /// `C⁻¹ v`.
    pub fn apply_precision(&self, v: &[f64]) -> Vec<f64> {
        match &self.cov {
            Covariance::Dense { chol, .. } => {
                let mut m = DMatrix::from_column_slice(v.len(), 1, v);
                solve_lower_in_place(chol, &mut m);
                solve_upper_t_in_place(chol, &mut m);
                m.as_slice().to_vec()
            }
            Covariance::Diagonal(var) => v.iter().zip(var).map(|(a, s)| a / s).collect(),
        }
    }

    /// `(u - m)ᵀ C⁻¹ (u - m)`.
    pub fn cameron_martin_sq(&self, u: &[f64]) -> f64 {
        let r: Vec<f64> = u.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        match &self.cov {
            Covariance::Dense { chol, .. } => {
                let mut m = DMatrix::from_column_slice(r.len(), 1, &r);
                solve_lower_in_place(chol, &mut m);
                m.iter().map(|x| x * x).sum()
            }
            Covariance::Diagonal(var) => r.iter().zip(var).map(|(a, s)| a * a / s).sum(),
        }
    }

    /// Unnormalized log density `-½ (u - m)ᵀ C⁻¹ (u - m)`.
    pub fn log_density_unnormalized(&self, u: &[f64]) -> f64 {
        -0.5 * self.cameron_martin_sq(u)
    }

    /// `m + L z` for a standard normal vector `z`.
    pub fn transform(&self, z: &[f64]) -> Vec<f64> {
        match &self.cov {
            Covariance::Dense { chol, .. } => {
                let d = self.mean.len();
                let mut out = self.mean.clone();
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += chol[(i, j)] * z[j];
                    }
                    out[i] += acc;
                }
                out
            }
            Covariance::Diagonal(var) => self
                .mean
                .iter()
                .zip(var)
                .zip(z)
                .map(|((m, s), z)| m + s.sqrt() * z)
                .collect(),
        }
    }

    /// Image under `x ↦ shift + scale ∘ x`; the cached factor is rescaled rowwise.
    pub fn affine_diagonal(&self, shift: &[f64], scale: &[f64]) -> Result<GaussianMeasure> {
        let d = self.dim();
        if shift.len() != d || scale.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: shift.len().min(scale.len()),
            });
        }
        let mean = (0..d).map(|k| shift[k] + scale[k] * self.mean[k]).collect();
        let cov = match &self.cov {
            Covariance::Dense {
                matrix,
                chol,
                jitter,
            } => {
                let s = DVector::from_column_slice(scale);
                let mut m = matrix.clone();
                let mut l = chol.clone();
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] *= s[i] * s[j];
                        l[(i, j)] *= s[i];
                    }
                }
                Covariance::Dense {
                    matrix: m,
                    chol: l,
                    jitter: *jitter,
                }
            }
            Covariance::Diagonal(v) => {
                Covariance::Diagonal(v.iter().zip(scale).map(|(v, s)| v * s * s).collect())
            }
        };
        Ok(GaussianMeasure { mean, cov })
    }

    /// Zero-mean draw `L z` (used by pCN proposals).
    pub fn sample_centered(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut v = self.sample_one(rng);
        v.iter_mut().zip(&self.mean).for_each(|(a, m)| *a -= m);
        v
    }

    pub fn sample_one(&self, rng: &mut impl Rng) -> Vec<f64> {
        let z = standard_normal_vec(rng, self.dim());
        self.transform(&z)
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed, 0);
        (0..count).map(|_| self.sample_one(&mut rng)).collect()
    }
}

/// i.i.d. draws from `g`, reproducible given `seed`.
pub fn sample_gaussian(g: &GaussianMeasure, count: usize, seed: u64) -> Vec<Vec<f64>> {
    g.sample(count, seed)
}

/// Forward substitution `L X = B` in place.
pub(crate) fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let ok = l.solve_lower_triangular_mut(b);
    debug_assert!(ok, "singular Cholesky factor");
}

/// Back substitution `Lᵀ X = B` in place.
pub(crate) fn solve_upper_t_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let ok = l.tr_solve_lower_triangular_mut(b);
    debug_assert!(ok, "singular Cholesky factor");
}
