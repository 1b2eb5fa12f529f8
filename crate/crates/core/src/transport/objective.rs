use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::DiagonalMap;
use crate::error::{Error, Result};
use crate::forward::Operator;
use crate::gaussian::Covariance;
use crate::posterior::HierarchicalPosterior;

/// Largest dimension for which the dense quadratic form is assembled.
const DENSE_LIMIT: usize = 8192;
/// Samples per parallel work unit; fixed so sums are reproducible.
const CHUNK: usize = 16;

/// `(1/M) Σ_i [-log π(T(x_i), λ) - log det ∇T(x_i)]` with the smoothed FTV,
/// evaluated sample by sample. Works for any polynomial degree.
pub fn saa_objective(
    map: &DiagonalMap,
    posterior: &HierarchicalPosterior,
    lambda: f64,
    samples: &[Vec<f64>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let terms: Vec<Result<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let logdet = map.log_det_jacobian(x, i)?;
            Ok(-posterior.log_density(&map.apply(x), lambda, true)? - logdet)
        })
        .collect();
    let mut acc = 0.0;
    for t in terms {
        acc += t?;
    }
    Ok(acc / samples.len() as f64)
}

/// Expected quadratic part `E[½ uᵀQu - rᵀu] + c` with `u = a₀ + a₁∘x`.
#[derive(Debug, Clone)]
enum Quadratic {
    /// Diagonal `Q`; `second` holds `(1/M) Σ x_ik²`.
    Diagonal {
        q: Vec<f64>,
        second: Vec<f64>,
    },
    /// Dense `Q` and `P = Q ∘ S` with `S = (1/M) Σ x_i x_iᵀ`.
    Dense {
        q: DMatrix<f64>,
        p: DMatrix<f64>,
    },
}

/// The linear-map SAA problem with the Gaussian part reduced to sample moments.
#[derive(Debug, Clone)]
pub struct SaaProblem<'a> {
    posterior: &'a HierarchicalPosterior,
    samples: Vec<Vec<f64>>,
    mean: Vec<f64>,
    quad: Quadratic,
    r: Vec<f64>,
    c: f64,
}

/// Objective value with gradients in `a₀` and `a₁`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad_offset: Vec<f64>,
    pub grad_slope: Vec<f64>,
    pub mean_ftv: f64,
}

impl<'a> SaaProblem<'a> {
    pub fn new(posterior: &'a HierarchicalPosterior, samples: Vec<Vec<f64>>) -> Result<Self> {
        let d = posterior.dim();
        let m = samples.len();
        if m == 0 {
            return Err(Error::Empty);
        }
        if let Some(bad) = samples.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        let mut mean = vec![0.0; d];
        for x in &samples {
            mean.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);

        let model = posterior.model();
        let prior = posterior.prior();
        let s2 = model.sigma().powi(2);
        let shifted = posterior.shifted_data();
        let prior_mean_precision = prior.apply_precision(prior.mean());
        let r: Vec<f64> = model
            .apply_transpose(&shifted)
            .iter()
            .zip(&prior_mean_precision)
            .map(|(a, b)| a / s2 + b)
            .collect();
        let c = shifted.iter().map(|v| v * v).sum::<f64>() / (2.0 * s2)
            + 0.5
                * prior
                    .mean()
                    .iter()
                    .zip(&prior_mean_precision)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();

        let quad = match (model.operator(), prior.covariance()) {
            (Operator::Identity(_), Covariance::Diagonal(var)) => {
                let mut second = vec![0.0; d];
                for x in &samples {
                    second.iter_mut().zip(x).for_each(|(a, b)| *a += b * b);
                }
                second.iter_mut().for_each(|v| *v /= m as f64);
                Quadratic::Diagonal {
                    q: var.iter().map(|v| 1.0 / s2 + 1.0 / v).collect(),
                    second,
                }
            }
            _ => {
                if d > DENSE_LIMIT {
                    return Err(Error::Unsupported(format!(
                        "dense SAA quadratic form beyond dimension {DENSE_LIMIT} (got {d})"
                    )));
                }
                let q = model.operator().gram() / s2 + prior.precision_matrix();
                let q = (&q + q.transpose()) * 0.5;
                let x = DMatrix::from_fn(m, d, |i, k| samples[i][k]);
                let s = x.tr_mul(&x) / m as f64;
                let p = q.component_mul(&s);
                Quadratic::Dense { q, p }
            }
        };
        Ok(Self {
            posterior,
            samples,
            mean,
            quad,
            r,
            c,
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn posterior(&self) -> &HierarchicalPosterior {
        self.posterior
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn quadratic(&self, a0: &[f64], a1: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let xbar = &self.mean;
        let r = &self.r;
        match &self.quad {
            Quadratic::Diagonal { q, second } => {
                let mut value = self.c;
                let mut g0 = vec![0.0; d];
                let mut g1 = vec![0.0; d];
                for k in 0..d {
                    let (a, b) = (a0[k], a1[k]);
                    value += 0.5 * q[k] * (a * a + 2.0 * a * b * xbar[k] + b * b * second[k])
                        - r[k] * (a + b * xbar[k]);
                    g0[k] = q[k] * (a + b * xbar[k]) - r[k];
                    g1[k] = xbar[k] * (q[k] * a - r[k]) + q[k] * second[k] * b;
                }
                (value, g0, g1)
            }
            Quadratic::Dense { q, p } => {
                let a0v = DVector::from_column_slice(a0);
                let a1v = DVector::from_column_slice(a1);
                let dx = a1v.component_mul(&DVector::from_column_slice(xbar));
                let qa0 = q * &a0v;
                let qdx = q * &dx;
                let pa1 = p * &a1v;
                let rv = DVector::from_column_slice(r);
                let value = self.c + 0.5 * a0v.dot(&qa0) + a0v.dot(&qdx) + 0.5 * a1v.dot(&pa1)
                    - rv.dot(&(&a0v + &dx));
                let g0 = &qa0 + &qdx - &rv;
                let g1 = (&qa0 - &rv).component_mul(&DVector::from_column_slice(xbar)) + pa1;
                (value, g0.as_slice().to_vec(), g1.as_slice().to_vec())
            }
        }
    }

    /// Mean smoothed FTV over the pushed-forward samples and its gradients.
    fn ftv_terms(&self, a0: &[f64], a1: &[f64], want_grad: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let grid = self.posterior.model().grid();
        let (shape, h) = (grid.shape(), grid.spacing());
        let ftv = self.posterior.ftv();
        let eps = self.posterior.smoothing();
        let partial: Vec<(f64, Vec<f64>, Vec<f64>)> = self
            .samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut f = 0.0;
                let mut g0 = if want_grad { vec![0.0; d] } else { Vec::new() };
                let mut g1 = g0.clone();
                let mut u = vec![0.0; d];
                for x in chunk {
                    for k in 0..d {
                        u[k] = a0[k] + a1[k] * x[k];
                    }
                    let (v, g) = ftv.smoothed_values(&shape, &h, &u, eps, want_grad);
                    f += v;
                    if let Some(g) = g {
                        for k in 0..d {
                            g0[k] += g[k];
                            g1[k] += g[k] * x[k];
                        }
                    }
                }
                (f, g0, g1)
            })
            .collect();
        let m = self.samples.len() as f64;
        let mut f = 0.0;
        let mut g0 = vec![0.0; if want_grad { d } else { 0 }];
        let mut g1 = g0.clone();
        for (pf, p0, p1) in partial {
            f += pf;
            g0.iter_mut().zip(&p0).for_each(|(a, b)| *a += b);
            g1.iter_mut().zip(&p1).for_each(|(a, b)| *a += b);
        }
        g0.iter_mut().chain(g1.iter_mut()).for_each(|v| *v /= m);
        (f / m, g0, g1)
    }

    /// Objective at the linear map `(a₀, a₁)`; `a₁` must be positive.
    pub fn evaluate(&self, a0: &[f64], a1: &[f64], lambda: f64, want_grad: bool) -> Result<Evaluation> {
        let d = self.dim();
        if a0.len() != d || a1.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: a0.len().min(a1.len()),
            });
        }
        if let Some(k) = a1.iter().position(|a| !(*a > 0.0)) {
            return Err(Error::NotMonotone {
                coordinate: k,
                sample: 0,
                derivative: a1[k],
            });
        }
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
        }
        let hyper = self.posterior.hyper();
        let (qv, mut g0, mut g1) = self.quadratic(a0, a1);
        let (fv, f0, f1) = self.ftv_terms(a0, a1, want_grad);
        let logdet: f64 = a1.iter().map(|a| a.ln()).sum();
        let value = qv + 0.5 * lambda * fv - (hyper.shape() - 1.0) * lambda.ln()
            + hyper.rate() * lambda
            - logdet;
        if want_grad {
            for k in 0..d {
                g0[k] += 0.5 * lambda * f0[k];
                g1[k] += 0.5 * lambda * f1[k] - 1.0 / a1[k];
            }
        }
        Ok(Evaluation {
            value,
            grad_offset: if want_grad { g0 } else { Vec::new() },
            grad_slope: if want_grad { g1 } else { Vec::new() },
            mean_ftv: fv,
        })
    }

    pub fn evaluate_map(&self, map: &DiagonalMap, lambda: f64) -> Result<f64> {
        if map.degree() != 1 {
            return Err(Error::Unsupported("SAA problem is for linear maps".into()));
        }
        Ok(self.evaluate(&map.offset(), &map.slope(), lambda, false)?.value)
    }
}
