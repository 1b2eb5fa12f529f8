//! Data misfit, fractional TV penalty and the hierarchical log posterior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{LinearForwardModel, Operator};
use crate::fractional::{FtvOperator, DEFAULT_SMOOTHING};
use crate::gaussian::{Covariance, GaussianMeasure};

/// Gamma hyperprior `G(λ; k, ϑ)` on the regularisation weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    shape: f64,
    rate: f64,
}

impl HyperPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 1.0 && shape.is_finite()) {
            return Err(Error::Domain(format!("shape must exceed 1, got {shape}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("rate must be positive, got {rate}")));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `∂/∂λ` of the negative log posterior: `ϑ + ftv/2 - (k-1)/λ`.
    pub fn stationarity_residual(&self, ftv_value: f64, lambda: f64) -> f64 {
        self.rate + 0.5 * ftv_value - (self.shape - 1.0) / lambda
    }
}

/// `λ = 2(k-1) / (ftv + 2ϑ)`.
pub fn map_lambda(ftv_value: f64, hyper: &HyperPrior) -> f64 {
    2.0 * (hyper.shape - 1.0) / (ftv_value + 2.0 * hyper.rate)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be positive, got {lambda}")))
    }
}

/// `π(u, λ | y) ∝ λ^{k-1} exp(-Φ(u) - ½‖u‖²_{C₀} - (λ/2) FTV(u) - ϑλ)`.
#[derive(Debug, Clone)]
pub struct HierarchicalPosterior {
    model: LinearForwardModel,
    y: Vec<f64>,
    prior: GaussianMeasure,
    ftv: FtvOperator,
    eps: f64,
    hyper: HyperPrior,
}

impl HierarchicalPosterior {
    pub fn new(
        model: LinearForwardModel,
        y: Vec<f64>,
        prior: GaussianMeasure,
        ftv: FtvOperator,
        hyper: HyperPrior,
    ) -> Result<Self> {
        if y.len() != model.n_obs() {
            return Err(Error::DimensionMismatch {
                expected: model.n_obs(),
                actual: y.len(),
            });
        }
        if prior.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                actual: prior.dim(),
            });
        }
        Ok(Self {
            model,
            y,
            prior,
            ftv,
            eps: DEFAULT_SMOOTHING,
            hyper,
        })
    }

    pub fn with_smoothing(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("smoothing must be positive, got {eps}")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn model(&self) -> &LinearForwardModel {
        &self.model
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }

    pub fn prior(&self) -> &GaussianMeasure {
        &self.prior
    }

    pub fn ftv(&self) -> &FtvOperator {
        &self.ftv
    }

    pub fn smoothing(&self) -> f64 {
        self.eps
    }

    pub fn hyper(&self) -> &HyperPrior {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `y - offset`, the data seen by the linear part of the model.
    pub fn shifted_data(&self) -> Vec<f64> {
        match self.model.offset() {
            Some(b) => self.y.iter().zip(b).map(|(y, b)| y - b).collect(),
            None => self.y.clone(),
        }
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: u.len(),
            })
        }
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        self.model
            .observe(u)
            .iter()
            .zip(&self.y)
            .map(|(a, y)| a - y)
            .collect()
    }

    /// `Φ(u) = ‖A u + b - y‖² / (2σ²)`.
    pub fn data_misfit(&self, u: &[f64]) -> Result<f64> {
        self.check_dim(u)?;
        let s2 = self.model.sigma().powi(2);
        Ok(self.residual(u).iter().map(|r| r * r).sum::<f64>() / (2.0 * s2))
    }

    /// FTV of `u` on the model grid, exact or smoothed.
    pub fn ftv_value(&self, u: &[f64], smoothed: bool) -> Result<f64> {
        self.check_dim(u)?;
        let g = self.model.grid();
        let (shape, h) = (g.shape(), g.spacing());
        Ok(if smoothed {
            self.ftv.smoothed_values(&shape, &h, u, self.eps, false).0
        } else {
            self.ftv.norm_values(&shape, &h, u)
        })
    }

    /// `J(u; λ) = (λ/2) FTV(u)`.
    pub fn ftg_penalty(&self, u: &[f64], lambda: f64, smoothed: bool) -> Result<f64> {
        check_lambda(lambda)?;
        Ok(0.5 * lambda * self.ftv_value(u, smoothed)?)
    }

    /// `Φ(u) + J(u; λ)`, the part of the potential not covered by the Gaussian reference.
    pub fn potential(&self, u: &[f64], lambda: f64, smoothed: bool) -> Result<f64> {
        Ok(self.data_misfit(u)? + self.ftg_penalty(u, lambda, smoothed)?)
    }

    /// Unnormalised log posterior with the additive constant fixed at zero.
    pub fn log_density(&self, u: &[f64], lambda: f64, smoothed: bool) -> Result<f64> {
        check_lambda(lambda)?;
        let k = self.hyper.shape;
        Ok((k - 1.0) * lambda.ln()
            - self.data_misfit(u)?
            - 0.5 * self.prior.cameron_martin_sq(u)
            - self.ftg_penalty(u, lambda, smoothed)?
            - self.hyper.rate * lambda)
    }

    /// Gradient in `u` of the smoothed log posterior.
    pub fn grad_log_density(&self, u: &[f64], lambda: f64) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        self.check_dim(u)?;
        let s2 = self.model.sigma().powi(2);
        let misfit = self.model.apply_transpose(&self.residual(u));
        let centred: Vec<f64> = u.iter().zip(self.prior.mean()).map(|(a, m)| a - m).collect();
        let prior = self.prior.apply_precision(&centred);
        let g = self.model.grid();
        let (_, ftv) = self
            .ftv
            .smoothed_values(&g.shape(), &g.spacing(), u, self.eps, true);
        let ftv = ftv.unwrap();
        Ok((0..u.len())
            .map(|i| -misfit[i] / s2 - prior[i] - 0.5 * lambda * ftv[i])
            .collect())
    }

    /// λ maximising the posterior for fixed `u` (smoothed FTV).
    pub fn lambda_at(&self, u: &[f64]) -> Result<f64> {
        Ok(map_lambda(self.ftv_value(u, true)?, &self.hyper))
    }
}

/// Exact Gaussian posterior when the FTV term is absent:
/// `Σ = (AᵀA/σ² + C₀⁻¹)⁻¹`, `μ = Σ (Aᵀ(y - b)/σ² + C₀⁻¹ m)`.
pub fn conjugate_posterior(
    model: &LinearForwardModel,
    prior: &GaussianMeasure,
    y: &[f64],
) -> Result<GaussianMeasure> {
    if y.len() != model.n_obs() {
        return Err(Error::DimensionMismatch {
            expected: model.n_obs(),
            actual: y.len(),
        });
    }
    let s2 = model.sigma().powi(2);
    let shifted: Vec<f64> = match model.offset() {
        Some(b) => y.iter().zip(b).map(|(y, b)| y - b).collect(),
        None => y.to_vec(),
    };
    let aty = model.apply_transpose(&shifted);
    let pm = prior.apply_precision(prior.mean());
    let rhs: Vec<f64> = aty.iter().zip(&pm).map(|(a, p)| a / s2 + p).collect();

    if let (Operator::Identity(_), Covariance::Diagonal(var)) = (model.operator(), prior.covariance())
    {
        let post_var: Vec<f64> = var.iter().map(|v| 1.0 / (1.0 / s2 + 1.0 / v)).collect();
        let mean = rhs.iter().zip(&post_var).map(|(r, v)| r * v).collect();
        return GaussianMeasure::diagonal(mean, post_var);
    }

    let precision = model.operator().gram() / s2 + prior.precision_matrix();
    let precision = (&precision + precision.transpose()) * 0.5;
    let chol = precision.clone().cholesky().ok_or_else(|| Error::Singular {
        condition: condition_estimate(&precision),
    })?;
    let cov = chol.inverse();
    let mean = chol.solve(&DVector::from_vec(rhs));
    GaussianMeasure::dense(mean.as_slice().to_vec(), (&cov + cov.transpose()) * 0.5)
}

/// Diagonal Gaussian with the exact conjugate mean (by preconditioned
/// conjugate gradients) and variances `1 / P_kk`, `P = AᵀA/σ² + C₀⁻¹`.
/// This is the diagonal Gaussian closest to the conjugate posterior in
/// `KL(q ‖ p)`, and never forms a dense factorisation of `P`.
pub fn mean_field_posterior(
    model: &LinearForwardModel,
    prior: &GaussianMeasure,
    y: &[f64],
) -> Result<GaussianMeasure> {
    if y.len() != model.n_obs() {
        return Err(Error::DimensionMismatch {
            expected: model.n_obs(),
            actual: y.len(),
        });
    }
    let s2 = model.sigma().powi(2);
    let shifted: Vec<f64> = match model.offset() {
        Some(b) => y.iter().zip(b).map(|(y, b)| y - b).collect(),
        None => y.to_vec(),
    };
    let aty = model.apply_transpose(&shifted);
    let pm = prior.apply_precision(prior.mean());
    let rhs: Vec<f64> = aty.iter().zip(&pm).map(|(a, p)| a / s2 + p).collect();
    let prior_diag: Vec<f64> = match prior.covariance() {
        Covariance::Diagonal(v) => v.iter().map(|v| 1.0 / v).collect(),
        Covariance::Dense { .. } => prior.precision_matrix().diagonal().as_slice().to_vec(),
    };
    let diag: Vec<f64> = model
        .operator()
        .gram_diagonal()
        .iter()
        .zip(&prior_diag)
        .map(|(g, p)| g / s2 + p)
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let av = model.operator().apply_transpose(&model.operator().apply(v));
        let cv = prior.apply_precision(v);
        av.iter().zip(&cv).map(|(a, c)| a / s2 + c).collect()
    };
    let mean = pcg(apply, &rhs, &diag, 1e-12, 10 * rhs.len().max(100))?;
    GaussianMeasure::diagonal(mean, diag.iter().map(|p| 1.0 / p).collect())
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
fn pcg(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], diag: &[f64], rtol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x: Vec<f64> = b.iter().zip(diag).map(|(b, d)| b / d).collect();
    if bnorm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        let step = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= step * a);
        z = r.iter().zip(diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    if dot(&r, &r).sqrt() <= 1e-6 * bnorm {
        Ok(x)
    } else {
        Err(Error::Singular { condition: f64::INFINITY })
    }
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let ev = m.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{identity_model, ModelKind};
    use crate::fractional::{Boundary, GrunwaldWeights};
    use crate::gaussian::seeded_rng;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn ftv_for(grid: &Grid, alpha: f64) -> FtvOperator {
        FtvOperator::new(
            GrunwaldWeights::for_axis_len(alpha, grid.max_axis_len()).unwrap(),
            Boundary::Interior,
        )
    }

    fn identity_posterior(y: Vec<f64>, sigma: f64, var: f64) -> HierarchicalPosterior {
        let g = Grid::line(0.0, 1.0, y.len()).unwrap();
        let model = identity_model(g.clone(), sigma).unwrap();
        let prior = GaussianMeasure::isotropic(y.len(), var).unwrap();
        HierarchicalPosterior::new(model, y, prior, ftv_for(&g, 1.0), HyperPrior::new(2.0, 1.0).unwrap())
            .unwrap()
    }

    fn random_dense_model(n: usize, d: usize, sigma: f64, seed: u64) -> LinearForwardModel {
        let mut rng = seeded_rng(seed, 0);
        let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        LinearForwardModel::new(
            Operator::Dense(a),
            sigma,
            Grid::line(0.0, 1.0, d).unwrap(),
            ModelKind::Deconvolution,
        )
        .unwrap()
    }

    #[test]
    fn mean_field_matches_dense_conjugate_moments() {
        let model = random_dense_model(9, 6, 0.4, 11);
        let g = model.grid().clone();
        let prior = GaussianMeasure::squared_exponential(&g, 0.8, 0.3).unwrap();
        let y: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let exact = conjugate_posterior(&model, &prior, &y).unwrap();
        let mf = mean_field_posterior(&model, &prior, &y).unwrap();
        let precision = exact.precision_matrix();
        for k in 0..6 {
            assert_relative_eq!(mf.mean()[k], exact.mean()[k], epsilon = 1e-9, max_relative = 1e-8);
            assert_relative_eq!(mf.variances()[k], 1.0 / precision[(k, k)], max_relative = 1e-8);
            // conditional variance never exceeds the marginal one
            assert!(mf.variances()[k] <= exact.variances()[k] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn misfit_simple_cases() {
        let p = identity_posterior(vec![1.0, 2.0], 1.0, 1.0);
        assert_eq!(p.data_misfit(&[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(p.data_misfit(&[4.0, 6.0]).unwrap(), 12.5);
    }

    #[test]
    fn misfit_matches_expanded_quadratic() {
        let model = random_dense_model(5, 3, 0.7, 3);
        let a = model.operator().to_dense();
        let y = vec![0.3, -0.2, 1.0, 0.5, -1.1];
        let g = model.grid().clone();
        let p = HierarchicalPosterior::new(
            model,
            y.clone(),
            GaussianMeasure::isotropic(3, 1.0).unwrap(),
            ftv_for(&g, 1.0),
            HyperPrior::new(2.0, 1.0).unwrap(),
        )
        .unwrap();
        let u = [0.4, -0.9, 0.25];
        let mut expected = 0.0;
        for i in 0..5 {
            let mut r = -y[i];
            for j in 0..3 {
                r += a[(i, j)] * u[j];
            }
            expected += r * r;
        }
        expected /= 2.0 * 0.49;
        assert_relative_eq!(p.data_misfit(&u).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn penalty_cases() {
        let p = identity_posterior(vec![0.0; 4], 1.0, 1.0);
        assert_eq!(p.ftg_penalty(&[0.0; 4], 3.0, false).unwrap(), 0.0);
        let u = [0.0, 0.0, 1.0, 1.0];
        let one = p.ftg_penalty(&u, 1.0, false).unwrap();
        assert_relative_eq!(p.ftg_penalty(&u, 2.0, false).unwrap(), 2.0 * one, max_relative = 1e-14);
        // α = 1 step: total variation 1
        assert_relative_eq!(one, 0.5, max_relative = 1e-12);
        assert!(p.ftg_penalty(&u, 0.0, false).is_err());
    }

    #[test]
    fn log_density_at_origin() {
        let p = identity_posterior(vec![0.0; 3], 1.0, 1.0);
        let lambda: f64 = 2.5;
        let expected = (2.0 - 1.0) * lambda.ln() - lambda;
        assert_relative_eq!(p.log_density(&[0.0; 3], lambda, false).unwrap(), expected);
        assert!(p.log_density(&[0.0; 3], -1.0, true).is_err());
    }

    #[test]
    fn log_density_ratio_is_termwise() {
        let p = identity_posterior(vec![0.5, -0.3, 0.2, 0.9], 0.3, 2.0);
        let u = [0.1, 0.2, 0.3, 0.4];
        let v = [-0.4, 0.0, 0.8, 0.1];
        let lambda = 1.7;
        let lhs = p.log_density(&u, lambda, false).unwrap() - p.log_density(&v, lambda, false).unwrap();
        let term = |w: &[f64]| {
            p.data_misfit(w).unwrap()
                + 0.5 * p.prior().cameron_martin_sq(w)
                + p.ftg_penalty(w, lambda, false).unwrap()
        };
        assert_relative_eq!(lhs, term(&v) - term(&u), max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = 12;
        let g = Grid::line(0.0, 1.0, d).unwrap();
        let model = crate::forward::convolution_model(d, 0.1, (0.0, 1.0))
            .unwrap()
            .with_sigma(0.05)
            .unwrap();
        let prior = GaussianMeasure::squared_exponential(&g, 0.5, 0.1).unwrap();
        let y: Vec<f64> = (0..d).map(|i| (i as f64 * 0.4).sin()).collect();
        let p = HierarchicalPosterior::new(
            model,
            y,
            prior,
            ftv_for(&g, 0.8),
            HyperPrior::new(5.0, 1.0).unwrap(),
        )
        .unwrap()
        .with_smoothing(1e-3)
        .unwrap();
        let u: Vec<f64> = (0..d).map(|i| (i as f64 * 0.9).cos()).collect();
        let lambda = 3.0;
        let grad = p.grad_log_density(&u, lambda).unwrap();
        for i in 0..d {
            let h = 1e-6;
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (p.log_density(&up, lambda, true).unwrap() - p.log_density(&dn, lambda, true).unwrap())
                / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0),
                "coordinate {i}: fd {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn lambda_examples() {
        let h = HyperPrior::new(2000.0, 1.0).unwrap();
        assert_relative_eq!(map_lambda(3998.0, &h), 0.9995, max_relative = 1e-15);
        assert_relative_eq!(map_lambda(0.0, &h), 1999.0);
        assert!(HyperPrior::new(1.0, 1.0).is_err());
        assert!(HyperPrior::new(3.0, 0.0).is_err());
    }

    #[test]
    fn lambda_is_stationary() {
        let mut rng = seeded_rng(7, 0);
        for _ in 0..100 {
            let h = HyperPrior::new(rng.random_range(1.01..1e4), rng.random_range(1e-3..10.0)).unwrap();
            let ftv = rng.random_range(0.0..1e3);
            let lambda = map_lambda(ftv, &h);
            let scale = h.rate() + 0.5 * ftv;
            assert!(h.stationarity_residual(ftv, lambda).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn lambda_decreasing_in_ftv() {
        let h = HyperPrior::new(10.0, 2.0).unwrap();
        assert!(map_lambda(1.0, &h) > map_lambda(2.0, &h));
    }

    #[test]
    fn conjugate_equal_precision_average() {
        let g = Grid::line(0.0, 1.0, 3).unwrap();
        let model = identity_model(g, 0.5).unwrap();
        let prior = GaussianMeasure::isotropic(3, 0.25).unwrap();
        let y = [1.0, -2.0, 4.0];
        let post = conjugate_posterior(&model, &prior, &y).unwrap();
        for (m, y) in post.mean().iter().zip(y) {
            assert_relative_eq!(*m, y / 2.0, max_relative = 1e-14);
        }
        // dense path through an explicit identity matrix
        let dense = LinearForwardModel::new(
            Operator::Dense(DMatrix::identity(3, 3)),
            0.5,
            Grid::line(0.0, 1.0, 3).unwrap(),
            ModelKind::Deconvolution,
        )
        .unwrap();
        let post = conjugate_posterior(&dense, &prior, &y).unwrap();
        for (m, y) in post.mean().iter().zip(y) {
            assert_relative_eq!(*m, y / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn conjugate_shrinkage_factor() {
        let g = Grid::line(0.0, 1.0, 3).unwrap();
        let model = identity_model(g, 0.3).unwrap();
        let var = vec![0.1, 1.0, 4.0];
        let prior = GaussianMeasure::diagonal(vec![0.0; 3], var.clone()).unwrap();
        let y = [1.0, 1.0, 1.0];
        let post = conjugate_posterior(&model, &prior, &y).unwrap();
        for i in 0..3 {
            assert_relative_eq!(post.mean()[i], var[i] / (var[i] + 0.09), max_relative = 1e-14);
        }
    }

    #[test]
    fn conjugate_uninformative_limit() {
        let g = Grid::line(0.0, 1.0, 2).unwrap();
        let model = identity_model(g, 1e8).unwrap();
        let prior = GaussianMeasure::diagonal(vec![0.3, -0.1], vec![2.0, 0.5]).unwrap();
        let post = conjugate_posterior(&model, &prior, &[5.0, 5.0]).unwrap();
        assert_relative_eq!(post.mean()[0], 0.3, epsilon = 1e-9);
        assert_relative_eq!(post.variances()[1], 0.5, max_relative = 1e-9);
    }

    #[test]
    fn conjugate_matches_quadrature() {
        let model = random_dense_model(2, 3, 0.8, 21);
        let prior = GaussianMeasure::isotropic(3, 0.6).unwrap();
        let y = [0.7, -0.4];
        let post = conjugate_posterior(&model, &prior, &y).unwrap();

        // brute-force moments of exp(-Φ - ½uᵀC⁻¹u) on a 3D grid
        let n = 91;
        let lim = 6.5;
        let step = 2.0 * lim / (n - 1) as f64;
        let mut z = 0.0;
        let mut m1 = [0.0; 3];
        let mut m2 = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let u = [
                        -lim + i as f64 * step,
                        -lim + j as f64 * step,
                        -lim + k as f64 * step,
                    ];
                    let au = model.apply(&u);
                    let phi: f64 = au.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * 0.64);
                    let w = (-phi - 0.5 * u.iter().map(|v| v * v).sum::<f64>() / 0.6).exp();
                    z += w;
                    for a in 0..3 {
                        m1[a] += w * u[a];
                        for b in 0..3 {
                            m2[a][b] += w * u[a] * u[b];
                        }
                    }
                }
            }
        }
        let cov = post.covariance_matrix();
        for a in 0..3 {
            let mean = m1[a] / z;
            assert!((mean - post.mean()[a]).abs() < 1e-6, "mean {a}");
            for b in 0..3 {
                let c = m2[a][b] / z - mean * m1[b] / z;
                assert!((c - cov[(a, b)]).abs() < 1e-6, "cov {a}{b}: {c} vs {}", cov[(a, b)]);
                assert!((cov[(a, b)] - cov[(b, a)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn toy_density_integrates() {
        let g = Grid::line(0.0, 1.0, 2).unwrap();
        let model = identity_model(g.clone(), 0.5).unwrap();
        let p = HierarchicalPosterior::new(
            model,
            vec![0.3, 0.8],
            GaussianMeasure::isotropic(2, 1.0).unwrap(),
            FtvOperator::new(GrunwaldWeights::for_axis_len(1.2, 2).unwrap(), Boundary::ZeroExtended),
            HyperPrior::new(3.0, 1.0).unwrap(),
        )
        .unwrap();
        let n = 201;
        let lim = 6.0;
        let step = 2.0 * lim / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = [-lim + i as f64 * step, -lim + j as f64 * step];
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                total += w * p.log_density(&u, 2.0, false).unwrap().exp();
            }
        }
        total *= step * step;
        assert!(total.is_finite() && total > 0.0);
    }
}
