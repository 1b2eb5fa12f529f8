//! Diagonal polynomial transport maps from a Gaussian reference to the posterior.

mod builder;
pub mod lbfgs;
mod objective;

pub use builder::{build_map, build_map_with_reference, LambdaRule, MapBuildResult, MapBuilderConfig};
pub use objective::{saa_objective, SaaProblem};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::posterior::{map_lambda, HierarchicalPosterior};

/// `T_k(x) = Σ_p a_{k,p} x_k^p`, one univariate polynomial per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMap {
    coeffs: Vec<Vec<f64>>,
}

impl DiagonalMap {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::Empty);
        };
        let width = first.len();
        if width < 2 {
            return Err(Error::Domain("map degree must be at least 1".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| c.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: bad.len(),
            });
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("map coefficients must be finite".into()));
        }
        Ok(Self { coeffs })
    }

    /// `T(x) = a₀ + a₁ ∘ x`.
    pub fn linear(a0: &[f64], a1: &[f64]) -> Result<Self> {
        if a0.len() != a1.len() {
            return Err(Error::DimensionMismatch {
                expected: a0.len(),
                actual: a1.len(),
            });
        }
        Self::new(a0.iter().zip(a1).map(|(a, b)| vec![*a, *b]).collect())
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            coeffs: vec![vec![0.0, 1.0]; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn degree(&self) -> usize {
        self.coeffs[0].len() - 1
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// Constant terms `a_{k,0}`.
    pub fn offset(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[0]).collect()
    }

    /// Linear terms `a_{k,1}`.
    pub fn slope(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[1]).collect()
    }

    fn eval(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }

    fn eval_derivative(c: &[f64], x: f64) -> f64 {
        c.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (p, a)| acc * x + p as f64 * a)
    }

    /// `∂T_k/∂x_k` at `x`.
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        Self::eval_derivative(&self.coeffs[k], x)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.coeffs
            .iter()
            .zip(x)
            .map(|(c, x)| Self::eval(c, *x))
            .collect()
    }

    /// `Σ_k log ∂T_k/∂x_k` at `x`; `sample` labels the error.
    pub fn log_det_jacobian(&self, x: &[f64], sample: usize) -> Result<f64> {
        let mut acc = 0.0;
        for (k, (c, xk)) in self.coeffs.iter().zip(x).enumerate() {
            let d = Self::eval_derivative(c, *xk);
            if !(d > 0.0) {
                return Err(Error::NotMonotone {
                    coordinate: k,
                    sample,
                    derivative: d,
                });
            }
            acc += d.ln();
        }
        Ok(acc)
    }

    /// Inverse of a linear map, `(w - a₀) / a₁`.
    pub fn inverse_linear(&self, w: &[f64]) -> Result<Vec<f64>> {
        if self.degree() != 1 {
            return Err(Error::Unsupported("inverse only for linear maps".into()));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(w)
            .map(|(c, w)| (w - c[0]) / c[1])
            .collect())
    }
}

/// Free-function form of [`DiagonalMap::apply`].
pub fn apply_map(map: &DiagonalMap, x: &[f64]) -> Vec<f64> {
    map.apply(x)
}

/// Linear map sending `reference` to the marginals of `target`:
/// `a₁ = sqrt(Σ_kk / C_kk)`, `a₀ = μ - a₁ ∘ m`.
pub fn initial_map(target: &GaussianMeasure, reference: &GaussianMeasure) -> Result<DiagonalMap> {
    if target.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            actual: target.dim(),
        });
    }
    let a1: Vec<f64> = target
        .variances()
        .iter()
        .zip(reference.variances())
        .map(|(s, c)| (s / c).sqrt())
        .collect();
    let a0: Vec<f64> = target
        .mean()
        .iter()
        .zip(reference.mean())
        .zip(&a1)
        .map(|((mu, m), a)| mu - a * m)
        .collect();
    DiagonalMap::linear(&a0, &a1)
}

/// Gaussian image of `reference` under a linear map.
pub fn pushforward_measure(map: &DiagonalMap, reference: &GaussianMeasure) -> Result<GaussianMeasure> {
    if map.degree() != 1 {
        return Err(Error::Unsupported(format!(
            "pushforward is Gaussian only for linear maps, degree is {}",
            map.degree()
        )));
    }
    reference.affine_diagonal(&map.offset(), &map.slope())
}

/// `(1/M) Σ_i T(x_i)`.
pub fn pushforward_mean(map: &DiagonalMap, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let images: Vec<Vec<f64>> = samples.par_iter().map(|x| map.apply(x)).collect();
    let mut mean = vec![0.0; map.dim()];
    for img in &images {
        mean.iter_mut().zip(img).for_each(|(m, v)| *m += v);
    }
    let m = samples.len() as f64;
    mean.iter_mut().for_each(|v| *v /= m);
    Ok(mean)
}

/// `λ = 2(k-1) / (FTV(mean of T(x_i)) + 2ϑ)` with the exact FTV.
pub fn update_lambda(
    map: &DiagonalMap,
    samples: &[Vec<f64>],
    posterior: &HierarchicalPosterior,
) -> Result<f64> {
    let mean = pushforward_mean(map, samples)?;
    Ok(map_lambda(posterior.ftv_value(&mean, false)?, posterior.hyper()))
}
