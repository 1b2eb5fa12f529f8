//! Config-driven benchmark problems: deconvolution, heat source, CT and
//! denoising, from synthetic data through map building and sampling to metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{autocorrelation, psnr, rel_err, ssim};
use crate::error::{Error, Result};
use crate::forward::{
    convolution_model, fbp, generate_data, generate_data_with_sigma, heat_source_model, identity_model,
    benchmark_truth, radon_model, ray_interpolation, shepp_logan, textured_image, HeatParams, Restriction,
    RayGeometry, SheppLoganSpec, SyntheticData, TruthKind,
};
use crate::fractional::{Boundary, FtvOperator, GrunwaldWeights};
use crate::gaussian::GaussianMeasure;
use crate::grid::{Field, Grid};
use crate::posterior::{HierarchicalPosterior, HyperPrior};
use crate::samplers::{
    pcn_sample, posterior_summary, tmis_sample, tune_pcn_beta, AcceptanceRule, Chain, ChainStorage, PcnConfig,
    TmisConfig,
};
use crate::transport::{build_map, LambdaRule, MapBuildResult, MapBuilderConfig};

/// Forward problem and its discretisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    /// Gaussian blur on `[0, 1]`.
    Deconvolution { cells: usize, delta: f64 },
    HeatSource {
        nodes: usize,
        steps: usize,
        final_time: f64,
        length: f64,
        weight: f64,
    },
    /// Parallel-beam CT of the Shepp–Logan phantom, with coordinates and ray
    /// lengths in pixel widths. The data come from a grid with twice the
    /// pixels and twice the rays.
    Ct { pixels: usize, angles: usize, rays: usize },
    Denoise { pixels: usize },
}

impl Problem {
    pub fn is_image(&self) -> bool {
        matches!(self, Problem::Ct { .. } | Problem::Denoise { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Noise {
    /// Percent of the maximum noise-free fine-grid output.
    Percent { percent: f64 },
    Sigma { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PriorSpec {
    /// Zero mean, `C₀(x₁, x₂) = γ exp(-½((x₁ - x₂)/ν)²)` (1D only).
    Kernel { gamma: f64, nu: f64 },
    /// Zero mean, `C₀ = variance · I`.
    Diagonal { variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSpec {
    pub k: f64,
    pub vartheta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSpec {
    #[serde(rename = "M")]
    pub saa_count: usize,
    pub outer_iters: usize,
    pub step_tol: f64,
    pub grad_tol: f64,
    pub max_evals: usize,
    pub memory: usize,
    pub lambda_rule: LambdaRule,
}

impl Default for MapSpec {
    fn default() -> Self {
        let d = MapBuilderConfig::default();
        Self {
            saa_count: d.saa_count,
            outer_iters: d.outer_iters,
            step_tol: d.step_tol,
            grad_tol: d.grad_tol,
            max_evals: d.max_evals,
            memory: d.memory,
            lambda_rule: d.lambda_rule,
        }
    }
}

impl MapSpec {
    pub fn builder_config(&self, seed: u64) -> MapBuilderConfig {
        MapBuilderConfig {
            saa_count: self.saa_count,
            outer_iters: self.outer_iters,
            step_tol: self.step_tol,
            grad_tol: self.grad_tol,
            max_evals: self.max_evals,
            memory: self.memory,
            seed,
            lambda_rule: self.lambda_rule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Tmis,
    Pcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub steps: usize,
    pub burn_in: usize,
    /// pCN step size; tuned to `target_acceptance` when absent.
    pub beta: Option<f64>,
    pub target_acceptance: [f64; 2],
    /// Standard deviation of an isotropic zero-mean sampling reference for
    /// the independence sampler; the prior is used when absent.
    pub reference_std: Option<f64>,
    pub rule: AcceptanceRule,
    /// Storage thinning; chosen from the dimension when absent.
    pub thin: Option<usize>,
    /// Number of evenly spaced coordinates whose full trace feeds the ESS.
    pub traced: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Tmis,
            steps: 10_000,
            burn_in: 1_000,
            beta: None,
            target_acceptance: [0.2, 0.3],
            reference_std: None,
            rule: AcceptanceRule::default(),
            thin: None,
            traced: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Fractional order; `1` gives the integer-order TV prior.
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub boundary: Boundary,
    /// Smoothing of `|∇^α u|` inside optimisation objectives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    /// Likelihood σ when it should differ from the data noise level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood_sigma: Option<f64>,
    pub problem: Problem,
    pub noise: Noise,
    pub prior: PriorSpec,
    pub hyper: HyperSpec,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    /// Artifact directory for command-line runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        match self.noise {
            Noise::Percent { percent: v } | Noise::Sigma { sigma: v } if !(v >= 0.0 && v.is_finite()) => {
                return Err(Error::Domain(format!("noise level must be nonnegative, got {v}")));
            }
            _ => {}
        }
        if let Some(s) = self.likelihood_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Domain(format!("likelihood sigma must be positive, got {s}")));
            }
        }
        match self.prior {
            PriorSpec::Kernel { .. } if self.problem.is_image() => {
                return Err(Error::Unsupported("kernel priors are 1D only; use a diagonal prior".into()));
            }
            PriorSpec::Kernel { gamma, nu } if !(gamma > 0.0 && nu > 0.0) => {
                return Err(Error::Domain("gamma and nu must be positive".into()));
            }
            PriorSpec::Diagonal { variance } if !(variance > 0.0) => {
                return Err(Error::Domain("prior variance must be positive".into()));
            }
            _ => {}
        }
        HyperPrior::new(self.hyper.k, self.hyper.vartheta)?;
        self.map.builder_config(self.seed).validate()?;
        let s = &self.sampler;
        if s.steps < 2 || s.burn_in >= s.steps {
            return Err(Error::Domain(format!(
                "need burn_in < steps and steps ≥ 2 (steps={}, burn_in={})",
                s.steps, s.burn_in
            )));
        }
        if let Some(b) = s.beta {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::Domain(format!("beta must lie in (0, 1], got {b}")));
            }
        }
        let [lo, hi] = s.target_acceptance;
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(Error::Domain("target acceptance must satisfy 0 < lo < hi ≤ 1".into()));
        }
        if let Some(r) = s.reference_std {
            if !(r > 0.0) {
                return Err(Error::Domain("reference std must be positive".into()));
            }
        }
        if s.thin == Some(0) {
            return Err(Error::Domain("thin must be at least 1".into()));
        }
        match self.problem {
            Problem::Deconvolution { cells, delta } if cells < 2 || !(delta > 0.0) => {
                Err(Error::Domain("deconvolution needs cells ≥ 2 and delta > 0".into()))
            }
            Problem::Ct { pixels, angles, rays } if pixels < 8 || angles == 0 || rays < 2 => {
                Err(Error::Domain("CT needs pixels ≥ 8, angles ≥ 1 and rays ≥ 2".into()))
            }
            Problem::Denoise { pixels } if pixels < 8 => Err(Error::Domain("denoising needs pixels ≥ 8".into())),
            _ => Ok(()),
        }
    }
}

/// Everything needed to sample one benchmark posterior.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub posterior: HierarchicalPosterior,
    /// Truth on the inference grid.
    pub truth: Field,
    pub data: SyntheticData,
    /// FBP for CT, the noisy image for denoising.
    pub baseline: Option<Field>,
    pub geometry: Option<RayGeometry>,
}

struct Discretisation {
    fine_model: crate::forward::LinearForwardModel,
    fine_truth: Field,
    restriction: Restriction,
    model: crate::forward::LinearForwardModel,
    truth: Field,
    geometry: Option<RayGeometry>,
}

fn discretise(problem: &Problem) -> Result<Discretisation> {
    match *problem {
        Problem::Deconvolution { cells, delta } => {
            let fine_model = convolution_model(2 * cells, delta, (0.0, 1.0))?;
            let fine_truth = benchmark_truth(TruthKind::Deconvolution, fine_model.grid())?;
            let model = convolution_model(cells, delta, (0.0, 1.0))?;
            let truth = benchmark_truth(TruthKind::Deconvolution, model.grid())?;
            Ok(Discretisation {
                restriction: Restriction::BlockMean {
                    grid: fine_model.grid().clone(),
                    factor: 2,
                },
                fine_model,
                fine_truth,
                model,
                truth,
                geometry: None,
            })
        }
        Problem::HeatSource {
            nodes,
            steps,
            final_time,
            length,
            weight,
        } => {
            let params = HeatParams {
                nodes,
                steps,
                final_time,
                length,
                weight,
            };
            let fine_model = heat_source_model(&params.refined())?;
            let fine_truth = benchmark_truth(TruthKind::HeatSource, fine_model.grid())?;
            let model = heat_source_model(&params)?;
            let truth = benchmark_truth(TruthKind::HeatSource, model.grid())?;
            Ok(Discretisation {
                restriction: Restriction::Subsample {
                    stride: 2,
                    offset: 1,
                    count: nodes,
                },
                fine_model,
                fine_truth,
                model,
                truth,
                geometry: None,
            })
        }
        Problem::Ct { pixels, angles, rays } => {
            // lengths in units of the inference pixel width
            let w = pixels as f64 / 2.0;
            let geometry = RayGeometry::parallel_beam(angles, rays, w)?;
            let fine_geometry = RayGeometry::parallel_beam(angles, 2 * rays, w)?;
            let phantom = |n: usize| -> Result<Field> {
                Field::new(
                    Grid::square(-w, w, n)?,
                    shepp_logan(&SheppLoganSpec::new(n))?.into_values(),
                )
            };
            let fine_truth = phantom(2 * pixels)?;
            let fine_model = radon_model(fine_truth.grid().clone(), &fine_geometry)?;
            let truth = phantom(pixels)?;
            let model = radon_model(truth.grid().clone(), &geometry)?;
            Ok(Discretisation {
                restriction: Restriction::Matrix(ray_interpolation(&fine_geometry, &geometry)?),
                fine_model,
                fine_truth,
                model,
                truth,
                geometry: Some(geometry),
            })
        }
        Problem::Denoise { pixels } => {
            let truth = textured_image(pixels)?;
            let model = identity_model(truth.grid().clone(), 1.0)?;
            Ok(Discretisation {
                fine_model: model.clone(),
                fine_truth: truth.clone(),
                restriction: Restriction::Identity,
                model,
                truth,
                geometry: None,
            })
        }
    }
}

/// Build truth, synthetic data (from the finer grid) and the posterior on
/// the inference grid.
pub fn setup(config: &ExperimentConfig) -> Result<ExperimentSetup> {
    config.validate()?;
    let disc = discretise(&config.problem).map_err(|e| e.at("forward model"))?;
    let data = match config.noise {
        Noise::Percent { percent } => generate_data(
            &disc.fine_model,
            &disc.fine_truth,
            &disc.restriction,
            percent,
            config.seed,
        ),
        Noise::Sigma { sigma } => generate_data_with_sigma(
            &disc.fine_model,
            &disc.fine_truth,
            &disc.restriction,
            sigma,
            config.seed,
        ),
    }
    .map_err(|e| e.at("data generation"))?;
    let sigma = config.likelihood_sigma.unwrap_or(data.sigma);
    if !(sigma > 0.0) {
        return Err(Error::Domain("noise-free data needs an explicit likelihood_sigma".into()).at("posterior"));
    }
    let grid = disc.model.grid().clone();
    let posterior = (|| {
        let model = disc.model.with_sigma(sigma)?;
        let prior = match config.prior {
            PriorSpec::Kernel { gamma, nu } => GaussianMeasure::squared_exponential(&grid, gamma, nu)?,
            PriorSpec::Diagonal { variance } => GaussianMeasure::isotropic(grid.len(), variance)?,
        };
        let ftv = FtvOperator::new(
            GrunwaldWeights::for_axis_len(config.alpha, grid.max_axis_len())?,
            config.boundary,
        );
        let hyper = HyperPrior::new(config.hyper.k, config.hyper.vartheta)?;
        let p = HierarchicalPosterior::new(model, data.y.clone(), prior, ftv, hyper)?;
        match config.smoothing {
            Some(eps) => p.with_smoothing(eps),
            None => Ok(p),
        }
    })()
    .map_err(|e| e.at("posterior"))?;
    let baseline = match (&config.problem, &disc.geometry) {
        (Problem::Ct { .. }, Some(g)) => Some(fbp(&data.y, g, &grid).map_err(|e| e.at("fbp"))?),
        (Problem::Denoise { .. }, _) => Some(Field::new(grid, data.y.clone())?),
        _ => None,
    };
    Ok(ExperimentSetup {
        posterior,
        truth: disc.truth,
        data,
        baseline,
        geometry: disc.geometry,
    })
}

/// Alternating-direction map construction with the prior as reference.
pub fn construct_map(setup: &ExperimentSetup, config: &ExperimentConfig) -> Result<MapBuildResult> {
    build_map(&setup.posterior, &config.map.builder_config(config.seed)).map_err(|e| e.at("map building"))
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub chain: Chain,
    /// Step size and pilot acceptance when pCN was tuned or fixed.
    pub beta: Option<(f64, Option<f64>)>,
}

fn traced_coords(dim: usize, count: usize) -> Vec<usize> {
    let count = count.min(dim);
    if count == 0 {
        return Vec::new();
    }
    // centres of `count` equal blocks
    let mut v: Vec<usize> = (0..count).map(|i| (2 * i + 1) * dim / (2 * count)).collect();
    v.dedup();
    v
}

/// Run the configured sampler with λ and the initial state taken from `map`.
pub fn run_sampler(setup: &ExperimentSetup, config: &ExperimentConfig, map: &MapBuildResult) -> Result<SampleOutcome> {
    let sc = &config.sampler;
    let post = &setup.posterior;
    let d = post.dim();
    let mut storage = ChainStorage::auto(d, sc.steps, sc.burn_in, traced_coords(d, sc.traced));
    if let Some(t) = sc.thin {
        storage.thin = t;
    }
    let lambda = map.lambda;
    let start = map.map.apply(post.prior().mean());
    let outcome = match sc.kind {
        SamplerKind::Tmis => {
            let mut cfg = TmisConfig::new(map.map.clone(), sc.steps, lambda, config.seed);
            cfg.rule = sc.rule;
            cfg.storage = storage;
            if let Some(s) = sc.reference_std {
                cfg.sampling_reference = Some(GaussianMeasure::isotropic(d, s * s)?);
            }
            SampleOutcome {
                chain: tmis_sample(post, &cfg)?,
                beta: None,
            }
        }
        SamplerKind::Pcn => {
            let (beta, pilot) = match sc.beta {
                Some(b) => (b, None),
                None => {
                    let t = tune_pcn_beta(
                        post,
                        lambda,
                        (sc.target_acceptance[0], sc.target_acceptance[1]),
                        (sc.steps / 10).clamp(200, 5000),
                        Some(start.clone()),
                        config.seed,
                    )?;
                    (t.beta, Some(t.acceptance))
                }
            };
            let mut cfg = PcnConfig::new(beta, sc.steps, lambda, config.seed);
            cfg.initial = Some(start);
            cfg.storage = storage;
            SampleOutcome {
                chain: pcn_sample(post, &cfg)?,
                beta: Some((beta, pilot)),
            }
        }
    };
    Ok(outcome)
}

/// Posterior summary and the flat metric report.
#[derive(Debug, Clone)]
pub struct Summary {
    pub mean: Field,
    pub std: Field,
    /// Per traced coordinate: `(index, ESS)`.
    pub ess: Vec<(usize, f64)>,
    pub metrics: BTreeMap<String, f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// What the diagnostics need from a chain: post-burn-in moments, the full
/// per-step traces used for ESS, and the sampler statistics.
#[derive(Debug, Clone)]
pub struct ChainDigest {
    pub mean: Field,
    pub std: Field,
    /// `(coordinate, trace over all steps)`; every coordinate when the chain
    /// kept all states, otherwise the traced ones.
    pub traces: Vec<(usize, Vec<f64>)>,
    pub acceptance_rate: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub beta: Option<(f64, Option<f64>)>,
}

impl ChainDigest {
    pub fn new(outcome: &SampleOutcome, burn_in: usize) -> Result<Self> {
        let chain = &outcome.chain;
        let (mean, std) = posterior_summary(chain, burn_in)?;
        let coords: Vec<usize> = if chain.thin == 1 {
            (0..chain.grid.len()).collect()
        } else {
            chain.trace_coords.clone()
        };
        let traces = coords
            .into_iter()
            .filter_map(|k| chain.coordinate_trace(k).map(|t| (k, t)))
            .collect();
        Ok(Self {
            mean,
            std,
            traces,
            acceptance_rate: chain.acceptance_rate(),
            steps: chain.steps,
            burn_in,
            beta: outcome.beta,
        })
    }
}

pub fn summarize(
    setup: &ExperimentSetup,
    config: &ExperimentConfig,
    map: &MapBuildResult,
    outcome: &SampleOutcome,
) -> Result<Summary> {
    summarize_digest(setup, config, map, &ChainDigest::new(outcome, config.sampler.burn_in)?)
}

pub fn summarize_digest(
    setup: &ExperimentSetup,
    config: &ExperimentConfig,
    map: &MapBuildResult,
    digest: &ChainDigest,
) -> Result<Summary> {
    let burn = digest.burn_in;
    let mean = digest.mean.clone();
    let std = digest.std.clone();
    let mut m = BTreeMap::new();
    m.insert("rel_err".to_string(), rel_err(&mean, &setup.truth)?);
    m.insert("acceptance_rate".into(), digest.acceptance_rate);
    m.insert("lambda".into(), map.lambda);
    m.insert("noise_sigma".into(), setup.data.sigma);
    m.insert("likelihood_sigma".into(), setup.posterior.model().sigma());
    m.insert(
        "mean_posterior_std".into(),
        std.values().iter().sum::<f64>() / std.len() as f64,
    );
    m.insert("steps".into(), digest.steps as f64);
    m.insert("burn_in".into(), burn as f64);
    if let Some(last) = map.objective_trace.last() {
        m.insert("map_objective".into(), *last);
    }
    m.insert("map_evaluations".into(), map.evaluations as f64);
    if let Some((beta, pilot)) = digest.beta {
        m.insert("beta".into(), beta);
        if let Some(a) = pilot {
            m.insert("pilot_acceptance".into(), a);
        }
    }

    let mut ess = Vec::new();
    for (k, trace) in &digest.traces {
        let tail = &trace[burn.min(trace.len())..];
        let max_lag = (tail.len() / 2).clamp(1, 5000);
        if tail.len() > max_lag {
            if let Ok(acf) = autocorrelation(tail, max_lag) {
                ess.push((*k, acf.ess));
            }
        }
    }
    if !ess.is_empty() {
        let mut v: Vec<f64> = ess.iter().map(|e| e.1).collect();
        m.insert("ess_min".into(), v.iter().copied().fold(f64::INFINITY, f64::min));
        m.insert("ess_median".into(), median(&mut v));
    }

    if config.problem.is_image() {
        let t = setup.truth.values();
        let range = t.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t.iter().copied().fold(f64::INFINITY, f64::min);
        m.insert("ssim".into(), ssim(&mean, &setup.truth, range)?);
        if let Ok(p) = psnr(&mean, &setup.truth, range) {
            m.insert("psnr".into(), p);
        }
        if let Some(b) = &setup.baseline {
            m.insert("rel_err_baseline".into(), rel_err(b, &setup.truth)?);
            m.insert("ssim_baseline".into(), ssim(b, &setup.truth, range)?);
            if let Ok(p) = psnr(b, &setup.truth, range) {
                m.insert("psnr_baseline".into(), p);
            }
        }
    }
    Ok(Summary { mean, std, ess, metrics: m })
}

/// Complete pipeline output.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub setup: ExperimentSetup,
    pub map: MapBuildResult,
    pub outcome: SampleOutcome,
    pub summary: Summary,
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentRun> {
    let setup = setup(config)?;
    let map = construct_map(&setup, config)?;
    let outcome = run_sampler(&setup, config, &map).map_err(|e| e.at("sampling"))?;
    let summary = summarize(&setup, config, &map, &outcome).map_err(|e| e.at("diagnostics"))?;
    Ok(ExperimentRun {
        setup,
        map,
        outcome,
        summary,
    })
}
