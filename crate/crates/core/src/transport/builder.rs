use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsOptions, StopReason};
use super::objective::SaaProblem;
use super::{initial_map, pushforward_mean, update_lambda, DiagonalMap};
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::posterior::{conjugate_posterior, map_lambda, mean_field_posterior, HierarchicalPosterior};

/// Above this dimension the starting map uses the mean-field Gaussian
/// instead of the dense conjugate posterior.
pub const DENSE_START_DIM: usize = 1024;

/// How the alternating scheme refreshes λ for a fixed map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// `2(k-1) / (mean_i FTV(T(x_i)) + 2ϑ)`: the exact minimiser of the SAA
    /// objective in λ, so every outer step is non-increasing.
    #[default]
    SampleAverage,
    /// `2(k-1) / (FTV(mean_i T(x_i)) + 2ϑ)`, see [`update_lambda`].
    PushforwardMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapBuilderConfig {
    /// Number of reference samples `M` in the sample average.
    pub saa_count: usize,
    /// Alternating λ / map updates.
    pub outer_iters: usize,
    pub step_tol: f64,
    pub grad_tol: f64,
    /// Objective evaluations per inner solve.
    pub max_evals: usize,
    pub memory: usize,
    pub seed: u64,
    pub lambda_rule: LambdaRule,
}

impl Default for MapBuilderConfig {
    fn default() -> Self {
        Self {
            saa_count: 1000,
            outer_iters: 5,
            step_tol: 1e-6,
            grad_tol: 1e-8,
            max_evals: 1000,
            memory: 10,
            seed: 0,
            lambda_rule: LambdaRule::default(),
        }
    }
}

impl MapBuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.saa_count < 2 {
            return Err(Error::Domain("need at least 2 SAA samples".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::Domain("need at least one outer iteration".into()));
        }
        if !(self.step_tol > 0.0 && self.grad_tol >= 0.0) || self.memory == 0 {
            return Err(Error::Domain("invalid optimizer tolerances".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapBuildResult {
    pub map: DiagonalMap,
    /// λ recomputed from the final map.
    pub lambda: f64,
    /// λ held fixed during the last map update.
    pub lambda_last_update: f64,
    /// Objective at the initial map, then after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub inner_stops: Vec<StopReason>,
    pub evaluations: usize,
    /// Sample-average mean of the pushed-forward reference samples.
    pub pushforward_mean: Vec<f64>,
    pub config: MapBuilderConfig,
}

impl MapBuildResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Alternating minimisation with the prior as construction reference.
pub fn build_map(posterior: &HierarchicalPosterior, config: &MapBuilderConfig) -> Result<MapBuildResult> {
    build_map_with_reference(posterior, posterior.prior(), config)
}

/// Alternate the closed-form λ update with an L-BFGS solve for the linear
/// diagonal map, starting from the map to the FTV-free Gaussian posterior.
pub fn build_map_with_reference(
    posterior: &HierarchicalPosterior,
    reference: &GaussianMeasure,
    config: &MapBuilderConfig,
) -> Result<MapBuildResult> {
    config.validate()?;
    if reference.dim() != posterior.dim() {
        return Err(Error::DimensionMismatch {
            expected: posterior.dim(),
            actual: reference.dim(),
        });
    }
    let samples = reference.sample(config.saa_count, config.seed);
    let gaussian_post = if posterior.dim() <= DENSE_START_DIM {
        conjugate_posterior(posterior.model(), posterior.prior(), posterior.data())?
    } else {
        mean_field_posterior(posterior.model(), posterior.prior(), posterior.data())?
    };
    let mut map = initial_map(&gaussian_post, reference)?;
    let problem = SaaProblem::new(posterior, samples)?;
    let d = posterior.dim();

    // offsets are optimised in units of the initial marginal spread
    let a0_init = map.offset();
    let spread: Vec<f64> = map
        .slope()
        .iter()
        .zip(reference.variances())
        .map(|(a, v)| a * v.sqrt())
        .collect();
    let to_params = |m: &DiagonalMap| -> Vec<f64> {
        let mut th: Vec<f64> = m
            .offset()
            .iter()
            .zip(&a0_init)
            .zip(&spread)
            .map(|((a, a_init), s)| (a - a_init) / s)
            .collect();
        th.extend(m.slope().iter().map(|a| a.ln()));
        th
    };
    let from_params = |th: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let a0 = (0..d).map(|k| a0_init[k] + spread[k] * th[k]).collect();
        let a1 = th[d..].iter().map(|b| b.exp()).collect();
        (a0, a1)
    };

    let opts = LbfgsOptions {
        memory: config.memory,
        step_tol: config.step_tol,
        grad_tol: config.grad_tol,
        max_evals: config.max_evals,
    };

    let refresh = |map: &DiagonalMap| -> Result<f64> {
        match config.lambda_rule {
            LambdaRule::PushforwardMean => update_lambda(map, problem.samples(), posterior),
            LambdaRule::SampleAverage => {
                // λ only enters through mean_ftv, so any positive value works here
                let e = problem.evaluate(&map.offset(), &map.slope(), 1.0, false)?;
                Ok(map_lambda(e.mean_ftv, posterior.hyper()))
            }
        }
    };
    let mut lambda = refresh(&map)?;
    let mut objective_trace = vec![problem.evaluate_map(&map, lambda)?];
    let mut lambda_trace = vec![lambda];
    let mut inner_stops = Vec::new();
    let mut evaluations = 0;

    for iter in 0..config.outer_iters {
        if iter > 0 {
            lambda = refresh(&map)?;
            lambda_trace.push(lambda);
        }
        let objective = |th: &[f64]| {
            let (a0, a1) = from_params(th);
            match problem.evaluate(&a0, &a1, lambda, true) {
                Ok(e) => {
                    let mut g: Vec<f64> = e
                        .grad_offset
                        .iter()
                        .zip(&spread)
                        .map(|(g, s)| g * s)
                        .collect();
                    g.extend(e.grad_slope.iter().zip(&a1).map(|(g, a)| g * a));
                    (e.value, g)
                }
                Err(_) => (f64::INFINITY, vec![0.0; 2 * d]),
            }
        };
        let res = minimize(objective, to_params(&map), &opts).map_err(|e| match e {
            Error::Optimizer { reason, mut trace } => {
                let mut full = objective_trace.clone();
                full.append(&mut trace);
                Error::Optimizer { reason, trace: full }
            }
            other => other,
        })?;
        evaluations += res.evals;
        inner_stops.push(res.reason);
        let (a0, a1) = from_params(&res.x);
        map = DiagonalMap::linear(&a0, &a1)?;
        objective_trace.push(problem.evaluate_map(&map, lambda)?);
    }

    let final_lambda = refresh(&map)?;
    let mean = pushforward_mean(&map, problem.samples())?;
    Ok(MapBuildResult {
        map,
        lambda: final_lambda,
        lambda_last_update: lambda,
        objective_trace,
        lambda_trace,
        inner_stops,
        evaluations,
        pushforward_mean: mean,
        config: config.clone(),
    })
}
