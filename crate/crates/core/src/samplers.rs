//! Preconditioned Crank–Nicolson and map-preconditioned independence samplers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{seeded_rng, GaussianMeasure};
use crate::grid::{Field, Grid};
use crate::posterior::HierarchicalPosterior;
use crate::transport::DiagonalMap;

/// Chains at or below this dimension keep every state by default.
pub const FULL_STORAGE_DIM: usize = 256;

/// How states are retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainStorage {
    /// Keep every `thin`-th state.
    pub thin: usize,
    /// Coordinates whose full trace is recorded regardless of thinning.
    pub trace_coords: Vec<usize>,
    /// First step folded into the running moments.
    pub moments_from: usize,
}

impl Default for ChainStorage {
    fn default() -> Self {
        Self {
            thin: 1,
            trace_coords: Vec::new(),
            moments_from: 0,
        }
    }
}

impl ChainStorage {
    /// Full storage for small problems, otherwise about 1000 stored states
    /// plus traces of `trace_coords`.
    pub fn auto(dim: usize, steps: usize, burn_in: usize, trace_coords: Vec<usize>) -> Self {
        let thin = if dim <= FULL_STORAGE_DIM {
            1
        } else {
            (steps / 1000).max(1)
        };
        Self {
            thin,
            trace_coords,
            moments_from: burn_in,
        }
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub count: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Welford {
    pub fn push(&mut self, x: &[f64]) {
        if self.count == 0 {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Sample standard deviation (`n - 1` denominator; 0 for one sample).
    pub fn std(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = (self.count - 1) as f64;
        self.m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    pub grid: Grid,
    /// States at steps `0, thin, 2·thin, …`; `samples[0]` is the initial state.
    pub samples: Vec<Vec<f64>>,
    pub thin: usize,
    pub steps: usize,
    pub trace_coords: Vec<usize>,
    pub traces: Vec<Vec<f64>>,
    pub moments_from: usize,
    pub moments: Welford,
    pub accepted: usize,
    pub proposed: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl Chain {
    fn new(grid: Grid, initial: Vec<f64>, storage: &ChainStorage, steps: usize, seed: u64, lambda: f64) -> Self {
        let mut chain = Self {
            grid,
            samples: Vec::new(),
            thin: storage.thin.max(1),
            steps: 0,
            trace_coords: storage.trace_coords.clone(),
            traces: vec![Vec::with_capacity(steps); storage.trace_coords.len()],
            moments_from: storage.moments_from,
            moments: Welford::default(),
            accepted: 0,
            proposed: 0,
            seed,
            lambda,
        };
        chain.record(&initial);
        chain
    }

    fn record(&mut self, u: &[f64]) {
        let step = self.steps;
        if step.is_multiple_of(self.thin) {
            self.samples.push(u.to_vec());
        }
        for (t, &k) in self.traces.iter_mut().zip(&self.trace_coords) {
            t.push(u[k]);
        }
        if step >= self.moments_from {
            self.moments.push(u);
        }
        self.steps += 1;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// Full per-step trace of coordinate `k`, if it was retained.
    pub fn coordinate_trace(&self, k: usize) -> Option<Vec<f64>> {
        if let Some(i) = self.trace_coords.iter().position(|&c| c == k) {
            return Some(self.traces[i].clone());
        }
        (self.thin == 1 && k < self.grid.len()).then(|| self.samples.iter().map(|s| s[k]).collect())
    }
}

/// Pointwise mean and standard deviation of the states after `burn_in` steps.
pub fn posterior_summary(chain: &Chain, burn_in: usize) -> Result<(Field, Field)> {
    let acc = if chain.thin == 1 {
        let mut w = Welford::default();
        for s in chain.samples.iter().skip(burn_in) {
            w.push(s);
        }
        w
    } else if burn_in == chain.moments_from {
        chain.moments.clone()
    } else {
        let mut w = Welford::default();
        let first = burn_in.div_ceil(chain.thin);
        for s in chain.samples.iter().skip(first) {
            w.push(s);
        }
        w
    };
    if acc.count == 0 {
        return Err(Error::Empty);
    }
    let std = acc.std();
    Ok((
        Field::new(chain.grid.clone(), acc.mean)?,
        Field::new(chain.grid.clone(), std)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcnConfig {
    pub beta: f64,
    /// Chain length including the initial state.
    pub steps: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Defaults to a draw from the prior.
    pub initial: Option<Vec<f64>>,
    pub storage: ChainStorage,
}

impl PcnConfig {
    pub fn new(beta: f64, steps: usize, lambda: f64, seed: u64) -> Self {
        Self {
            beta,
            steps,
            lambda,
            seed,
            initial: None,
            storage: ChainStorage::default(),
        }
    }
}

fn check_common(posterior: &HierarchicalPosterior, steps: usize, lambda: f64, initial: Option<&[f64]>) -> Result<()> {
    if steps == 0 {
        return Err(Error::Domain("chain needs at least one state".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(u) = initial {
        if u.len() != posterior.dim() {
            return Err(Error::DimensionMismatch {
                expected: posterior.dim(),
                actual: u.len(),
            });
        }
    }
    Ok(())
}

/// Metropolis–Hastings with proposal `v = m + √(1-β²)(u - m) + βω`, `ω ~ N(0, C₀)`,
/// accepted with probability `min(1, exp(Φ(u) + J(u) - Φ(v) - J(v)))` (exact FTV).
pub fn pcn_sample(posterior: &HierarchicalPosterior, config: &PcnConfig) -> Result<Chain> {
    check_common(posterior, config.steps, config.lambda, config.initial.as_deref())?;
    if !(config.beta > 0.0 && config.beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", config.beta)));
    }
    let prior = posterior.prior();
    let mut rng = seeded_rng(config.seed, 2);
    let mut u = match &config.initial {
        Some(u) => u.clone(),
        None => prior.sample_one(&mut rng),
    };
    let lambda = config.lambda;
    let mut pot_u = posterior.potential(&u, lambda, false)?;
    let mut chain = Chain::new(
        posterior.model().grid().clone(),
        u.clone(),
        &config.storage,
        config.steps,
        config.seed,
        lambda,
    );
    let (beta, keep) = (config.beta, (1.0 - config.beta * config.beta).sqrt());
    let mean = prior.mean();
    for _ in 1..config.steps {
        let w = prior.sample_centered(&mut rng);
        let v: Vec<f64> = (0..u.len())
            .map(|k| mean[k] + keep * (u[k] - mean[k]) + beta * w[k])
            .collect();
        let pot_v = posterior.potential(&v, lambda, false)?;
        chain.proposed += 1;
        let log_a = pot_u - pot_v;
        if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
            u = v;
            pot_u = pot_v;
            chain.accepted += 1;
        }
        chain.record(&u);
    }
    Ok(chain)
}

/// Acceptance rule for the independence sampler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    /// Full Metropolis–Hastings ratio `π(v) q(u) / (π(u) q(v))`.
    #[default]
    Exact,
    /// `exp(Φ(u) + J(u) - Φ(v) - J(v))`, ignoring the Gaussian factors.
    PotentialOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TmisConfig {
    pub map: DiagonalMap,
    #[serde(skip, default = "default_reference")]
    pub sampling_reference: Option<GaussianMeasure>,
    pub steps: usize,
    pub lambda: f64,
    pub seed: u64,
    pub rule: AcceptanceRule,
    /// Defaults to `E[T(r)]` under the sampling reference.
    pub initial: Option<Vec<f64>>,
    pub storage: ChainStorage,
}

fn default_reference() -> Option<GaussianMeasure> {
    None
}

impl TmisConfig {
    /// Sampling reference defaults to the prior of the posterior being sampled.
    pub fn new(map: DiagonalMap, steps: usize, lambda: f64, seed: u64) -> Self {
        Self {
            map,
            sampling_reference: None,
            steps,
            lambda,
            seed,
            rule: AcceptanceRule::Exact,
            initial: None,
            storage: ChainStorage::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct TmisState {
    u: Vec<f64>,
    potential: f64,
    log_prior: f64,
    log_proposal: f64,
}

struct TmisKernel<'a> {
    posterior: &'a HierarchicalPosterior,
    map: &'a DiagonalMap,
    reference: &'a GaussianMeasure,
    lambda: f64,
    rule: AcceptanceRule,
}

impl TmisKernel<'_> {
    fn state(&self, u: Vec<f64>, r: Option<&[f64]>) -> Result<TmisState> {
        let potential = self.posterior.potential(&u, self.lambda, false)?;
        let (log_prior, log_proposal) = match self.rule {
            AcceptanceRule::PotentialOnly => (0.0, 0.0),
            AcceptanceRule::Exact => {
                let r = match r {
                    Some(r) => r.to_vec(),
                    None => self.map.inverse_linear(&u)?,
                };
                (
                    -0.5 * self.posterior.prior().cameron_martin_sq(&u),
                    -0.5 * self.reference.cameron_martin_sq(&r),
                )
            }
        };
        Ok(TmisState {
            u,
            potential,
            log_prior,
            log_proposal,
        })
    }

    fn log_ratio(&self, from: &TmisState, to: &TmisState) -> f64 {
        (from.potential - to.potential) + (to.log_prior - from.log_prior)
            + (from.log_proposal - to.log_proposal)
    }
}

/// Log acceptance ratio (before truncation at 0) for moving from `u` to `v`.
pub fn tmis_log_ratio(
    posterior: &HierarchicalPosterior,
    config: &TmisConfig,
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let reference = config.sampling_reference.as_ref().unwrap_or(posterior.prior());
    let kernel = TmisKernel {
        posterior,
        map: &config.map,
        reference,
        lambda: config.lambda,
        rule: config.rule,
    };
    Ok(kernel.log_ratio(&kernel.state(u.to_vec(), None)?, &kernel.state(v.to_vec(), None)?))
}

/// Independence sampler with proposal `v = T(r)`, `r` drawn from the sampling reference.
pub fn tmis_sample(posterior: &HierarchicalPosterior, config: &TmisConfig) -> Result<Chain> {
    check_common(posterior, config.steps, config.lambda, config.initial.as_deref())?;
    if config.map.degree() != 1 {
        return Err(Error::Unsupported("independence sampler needs a linear map".into()));
    }
    if config.map.dim() != posterior.dim() {
        return Err(Error::DimensionMismatch {
            expected: posterior.dim(),
            actual: config.map.dim(),
        });
    }
    if let Some(k) = config.map.slope().iter().position(|a| !(*a > 0.0)) {
        return Err(Error::NotMonotone {
            coordinate: k,
            sample: 0,
            derivative: config.map.slope()[k],
        });
    }
    let reference = config.sampling_reference.as_ref().unwrap_or(posterior.prior());
    let kernel = TmisKernel {
        posterior,
        map: &config.map,
        reference,
        lambda: config.lambda,
        rule: config.rule,
    };
    let initial = match &config.initial {
        Some(u) => u.clone(),
        None => config.map.apply(reference.mean()),
    };
    let mut rng = seeded_rng(config.seed, 3);
    let mut current = kernel.state(initial, None)?;
    let mut chain = Chain::new(
        posterior.model().grid().clone(),
        current.u.clone(),
        &config.storage,
        config.steps,
        config.seed,
        config.lambda,
    );
    for _ in 1..config.steps {
        let r = reference.sample_one(&mut rng);
        let v = config.map.apply(&r);
        let proposal = kernel.state(v, Some(&r))?;
        chain.proposed += 1;
        let log_a = kernel.log_ratio(&current, &proposal);
        if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
            current = proposal;
            chain.accepted += 1;
        }
        chain.record(&current.u);
    }
    Ok(chain)
}

/// Result of the pCN step-size search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTuning {
    pub beta: f64,
    pub acceptance: f64,
    pub pilot_runs: usize,
}

/// Bisection on `log β` until a pilot chain's acceptance rate lies in `target`.
pub fn tune_pcn_beta(
    posterior: &HierarchicalPosterior,
    lambda: f64,
    target: (f64, f64),
    pilot_steps: usize,
    initial: Option<Vec<f64>>,
    seed: u64,
) -> Result<BetaTuning> {
    if !(0.0 < target.0 && target.0 < target.1 && target.1 <= 1.0) {
        return Err(Error::Domain("target acceptance range must satisfy 0 < lo < hi ≤ 1".into()));
    }
    let run = |beta: f64| -> Result<f64> {
        let cfg = PcnConfig {
            beta,
            steps: pilot_steps,
            lambda,
            seed,
            initial: initial.clone(),
            storage: ChainStorage {
                thin: pilot_steps.max(1),
                ..ChainStorage::default()
            },
        };
        Ok(pcn_sample(posterior, &cfg)?.acceptance_rate())
    };
    let mut runs = 1;
    let rate = run(1.0)?;
    if rate >= target.0 {
        return Ok(BetaTuning {
            beta: 1.0,
            acceptance: rate,
            pilot_runs: runs,
        });
    }
    let (mut lo, mut hi) = ((1e-6f64).ln(), 0.0f64);
    let mut best = BetaTuning {
        beta: 1.0,
        acceptance: rate,
        pilot_runs: runs,
    };
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let beta = mid.exp();
        let rate = run(beta)?;
        runs += 1;
        let mid_target = 0.5 * (target.0 + target.1);
        if (rate - mid_target).abs() < (best.acceptance - mid_target).abs() {
            best = BetaTuning {
                beta,
                acceptance: rate,
                pilot_runs: runs,
            };
        }
        if rate >= target.0 && rate <= target.1 {
            break;
        }
        if rate > target.1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.pilot_runs = runs;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::identity_model;
    use crate::fractional::{Boundary, FtvOperator, GrunwaldWeights};
    use crate::posterior::HyperPrior;
    use approx::assert_relative_eq;

    /// Tiny-λ, huge-σ posterior: Φ and J are numerically negligible.
    fn flat(d: usize, var: f64) -> HierarchicalPosterior {
        let g = Grid::line(0.0, 1.0, d).unwrap();
        HierarchicalPosterior::new(
            identity_model(g.clone(), 1e150).unwrap(),
            vec![0.0; d],
            GaussianMeasure::isotropic(d, var).unwrap(),
            FtvOperator::new(GrunwaldWeights::for_axis_len(1.0, d).unwrap(), Boundary::Interior),
            HyperPrior::new(2.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn toy(d: usize) -> HierarchicalPosterior {
        let g = Grid::line(0.0, 1.0, d).unwrap();
        HierarchicalPosterior::new(
            identity_model(g.clone(), 0.3).unwrap(),
            (0..d).map(|k| (k as f64).sin()).collect(),
            GaussianMeasure::isotropic(d, 1.0).unwrap(),
            FtvOperator::new(GrunwaldWeights::for_axis_len(1.0, d).unwrap(), Boundary::Interior),
            HyperPrior::new(2.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn summary_small_cases() {
        let g = Grid::line(0.0, 1.0, 2).unwrap();
        let mut c = Chain::new(g, vec![1.0, 2.0], &ChainStorage::default(), 3, 0, 1.0);
        c.record(&[1.0, 2.0]);
        let (m, s) = posterior_summary(&c, 0).unwrap();
        assert_eq!(m.values(), &[1.0, 2.0]);
        assert_eq!(s.values(), &[0.0, 0.0]);
        c.record(&[3.0, 0.0]);
        let (m, _) = posterior_summary(&c, 1).unwrap();
        assert_eq!(m.values(), &[2.0, 1.0]);
        assert!(matches!(posterior_summary(&c, 3), Err(Error::Empty)));
    }

    #[test]
    fn pcn_flat_target_accepts_everything() {
        let p = flat(3, 2.0);
        let chain = pcn_sample(&p, &PcnConfig::new(0.5, 2000, 1e-100, 1)).unwrap();
        assert_eq!(chain.accepted, chain.proposed);
    }

    #[test]
    fn pcn_independent_at_beta_one_recovers_prior() {
        let p = flat(2, 4.0);
        let chain = pcn_sample(&p, &PcnConfig::new(1.0, 100_000, 1e-100, 5)).unwrap();
        let (_, s) = posterior_summary(&chain, 0).unwrap();
        for v in s.values() {
            assert!((v - 2.0).abs() < 0.05 * 2.0);
        }
    }

    #[test]
    fn pcn_prior_std_within_five_percent() {
        let p = flat(3, 0.25);
        let chain = pcn_sample(&p, &PcnConfig::new(0.6, 100_000, 1e-100, 6)).unwrap();
        let (_, s) = posterior_summary(&chain, 0).unwrap();
        for v in s.values() {
            assert!((v - 0.5).abs() < 0.05 * 0.5, "std {v}");
        }
    }

    #[test]
    fn chain_starts_at_initial_and_rejections_copy() {
        let p = toy(4);
        let mut cfg = PcnConfig::new(0.9, 500, 2.0, 3);
        cfg.initial = Some(vec![0.1, 0.2, 0.3, 0.4]);
        let chain = pcn_sample(&p, &cfg).unwrap();
        assert_eq!(chain.samples[0], vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(chain.samples.len(), 500);
        let moves = chain.samples.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(moves, chain.accepted);
        assert!(chain.acceptance_rate() > 0.0 && chain.acceptance_rate() < 1.0);
    }

    #[test]
    fn seeds_reproduce() {
        let p = toy(3);
        let a = pcn_sample(&p, &PcnConfig::new(0.3, 300, 1.0, 9)).unwrap();
        let b = pcn_sample(&p, &PcnConfig::new(0.3, 300, 1.0, 9)).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn tmis_potential_rule_flat_target() {
        let p = flat(3, 1.0);
        let map = DiagonalMap::linear(&[0.3, 0.0, -0.1], &[0.5, 2.0, 1.0]).unwrap();
        let mut cfg = TmisConfig::new(map, 1000, 1e-100, 2);
        cfg.rule = AcceptanceRule::PotentialOnly;
        let chain = tmis_sample(&p, &cfg).unwrap();
        assert_eq!(chain.accepted, chain.proposed);
        assert_eq!(chain.samples[0], vec![0.3, 0.0, -0.1]);
    }

    #[test]
    fn tmis_exact_rule_matched_map_accepts_everything() {
        // flat potential and identity map: proposal equals the prior target
        let p = flat(3, 1.0);
        let cfg = TmisConfig::new(DiagonalMap::identity(3), 1000, 1e-100, 2);
        let chain = tmis_sample(&p, &cfg).unwrap();
        assert_eq!(chain.accepted, chain.proposed);
    }

    #[test]
    fn tmis_log_ratio_antisymmetric() {
        let p = toy(4);
        let map = DiagonalMap::linear(&[0.1; 4], &[0.4, 0.5, 0.6, 0.7]).unwrap();
        for rule in [AcceptanceRule::Exact, AcceptanceRule::PotentialOnly] {
            let mut cfg = TmisConfig::new(map.clone(), 10, 3.0, 0);
            cfg.rule = rule;
            let u = [0.2, -0.1, 0.5, 0.9];
            let v = [-0.3, 0.4, 0.0, 1.2];
            let a = tmis_log_ratio(&p, &cfg, &u, &v).unwrap();
            let b = tmis_log_ratio(&p, &cfg, &v, &u).unwrap();
            assert_relative_eq!(a, -b, max_relative = 1e-12);
        }
    }

    #[test]
    fn beta_tuning_hits_target() {
        let p = toy(6);
        let t = tune_pcn_beta(&p, 2.0, (0.2, 0.3), 4000, Some(p.data().to_vec()), 1).unwrap();
        assert!(t.beta > 0.0 && t.beta <= 1.0);
        assert!((0.15..=0.35).contains(&t.acceptance), "{t:?}");
    }

    #[test]
    fn thinned_storage_keeps_traces() {
        let p = toy(3);
        let mut cfg = PcnConfig::new(0.5, 1000, 1.0, 4);
        cfg.storage = ChainStorage {
            thin: 10,
            trace_coords: vec![1],
            moments_from: 100,
        };
        let chain = pcn_sample(&p, &cfg).unwrap();
        assert_eq!(chain.samples.len(), 100);
        assert_eq!(chain.coordinate_trace(1).unwrap().len(), 1000);
        assert!(chain.coordinate_trace(0).is_none());
        assert_eq!(chain.moments.count, 900);
        let (m, _) = posterior_summary(&chain, 100).unwrap();
        assert_eq!(m.values(), chain.moments.mean.as_slice());
    }
}
