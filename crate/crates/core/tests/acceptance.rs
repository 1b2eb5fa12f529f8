//! Acceptance gate. Each test checks one criterion and prints a single
//! `PASS`/`FAIL` line with the measured values before asserting.

use std::io::Write;
use std::path::PathBuf;

use ftg_core::diagnostics::{autocorrelation, rel_err};
use ftg_core::experiment::{self, ExperimentConfig, Noise, Problem, SamplerKind};
use ftg_core::forward::{
    convolution_model, fbp, generate_data, identity_model, benchmark_truth, radon_model, ray_cell_lengths,
    shepp_logan, Restriction, RayGeometry, SheppLoganSpec, TruthKind,
};
use ftg_core::fractional::{Boundary, FtvOperator, GrunwaldWeights};
use ftg_core::gaussian::{seeded_rng, GaussianMeasure};
use ftg_core::posterior::{conjugate_posterior, HierarchicalPosterior, HyperPrior};
use ftg_core::samplers::{pcn_sample, tmis_sample, AcceptanceRule, Chain, PcnConfig, TmisConfig};
use ftg_core::transport::{build_map, initial_map, LambdaRule, MapBuilderConfig, SaaProblem};
use ftg_core::{Field, Grid};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::gamma;

/// Written to the stderr handle directly so the line survives test output capture.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("{} criterion {id:>2} ({name}): {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn bundled(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    toml::from_str(&text).unwrap()
}

fn rel_vec_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// `(-1)^j C(α, j)` through the Gamma function, with the reflection formula
/// for negative arguments.
fn signed_binomial(alpha: f64, j: usize) -> f64 {
    let jf = j as f64;
    if alpha.fract() == 0.0 && jf > alpha {
        return 0.0;
    }
    let x = alpha - jf + 1.0;
    let gamma_x = if x > 0.0 {
        gamma(x)
    } else {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    };
    let c = gamma(alpha + 1.0) / (gamma(jf + 1.0) * gamma_x);
    if j.is_multiple_of(2) {
        c
    } else {
        -c
    }
}

#[test]
fn criterion_01_grunwald_weights() {
    let alphas = [0.2, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0, 1.01, 1.05, 1.1, 1.2, 1.5, 1.8, 2.0];
    let mut worst = 0.0f64;
    for &a in &alphas {
        let w = GrunwaldWeights::new(a, 51).unwrap();
        for j in 0..=50 {
            worst = worst.max((w.weights()[j] - signed_binomial(a, j)).abs());
        }
    }

    // α = 1 against centred differences, in 1D and 2D
    let mut rng = seeded_rng(1, 0);
    let mut tv_gap = 0.0f64;
    let line = Grid::line(0.0, 2.0, 40).unwrap();
    let u: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = line.spacing()[0];
    let central: f64 = (1..39).map(|l| (u[l + 1] - u[l - 1]).abs() / (2.0 * h) * h).sum();
    let op = FtvOperator::new(GrunwaldWeights::for_axis_len(1.0, 40).unwrap(), Boundary::Interior);
    let got = op.norm(&Field::new(line, u).unwrap()).unwrap();
    tv_gap = tv_gap.max((got - central).abs() / central);

    let sq = Grid::square(-1.0, 1.0, 12).unwrap();
    let img: Vec<f64> = (0..144).map(|_| rng.random_range(0.0..1.0)).collect();
    let hs = sq.spacing();
    let at = |r: usize, c: usize| img[r * 12 + c];
    let mut central2 = 0.0;
    for r in 0..12 {
        for c in 0..12 {
            let gy = if (1..11).contains(&r) { (at(r + 1, c) - at(r - 1, c)) / (2.0 * hs[0]) } else { 0.0 };
            let gx = if (1..11).contains(&c) { (at(r, c + 1) - at(r, c - 1)) / (2.0 * hs[1]) } else { 0.0 };
            central2 += (gx * gx + gy * gy).sqrt() * hs[0] * hs[1];
        }
    }
    let op2 = FtvOperator::new(GrunwaldWeights::for_axis_len(1.0, 12).unwrap(), Boundary::Interior);
    let got2 = op2.norm(&Field::new(sq, img).unwrap()).unwrap();
    tv_gap = tv_gap.max((got2 - central2).abs() / central2);

    report(
        1,
        "Grünwald oracle",
        worst <= 1e-12 && tv_gap <= 1e-14,
        format!("max |w - (-1)^j C(α,j)| = {worst:.2e} (tol 1e-12); α=1 TV relative gap {tv_gap:.1e}"),
    );
}

fn per_coordinate_ess(chain: &Chain, burn: usize, k: usize) -> f64 {
    let trace = chain.coordinate_trace(k).unwrap();
    let tail = &trace[burn..];
    autocorrelation(tail, tail.len() / 2).unwrap().ess
}

#[test]
fn criterion_02_conjugate_gaussian_recovery() {
    let d = 30;
    // a kernel narrower than the benchmark's 0.02 keeps the conjugate posterior
    // essentially diagonal, so the diagonal map is exact up to ~1% correlation
    let delta = 0.01;
    let fine = convolution_model(2 * d, delta, (0.0, 1.0)).unwrap();
    let truth = benchmark_truth(TruthKind::Deconvolution, fine.grid()).unwrap();
    let restriction = Restriction::BlockMean {
        grid: fine.grid().clone(),
        factor: 2,
    };
    let data = generate_data(&fine, &truth, &restriction, 1.0, 7).unwrap();
    let model = convolution_model(d, delta, (0.0, 1.0)).unwrap().with_sigma(data.sigma).unwrap();
    let prior = GaussianMeasure::isotropic(d, 0.05).unwrap();
    let exact = conjugate_posterior(&model, &prior, &data.y).unwrap();
    let post = HierarchicalPosterior::new(
        model,
        data.y.clone(),
        prior.clone(),
        FtvOperator::new(GrunwaldWeights::for_axis_len(0.95, d).unwrap(), Boundary::Interior),
        HyperPrior::new(2000.0, 1.0).unwrap(),
    )
    .unwrap();
    let map = initial_map(&exact, &prior).unwrap();
    // smallest positive λ: the FTV term vanishes to machine precision
    let cfg = TmisConfig::new(map, 100_000, f64::MIN_POSITIVE, 0);
    let chain = tmis_sample(&post, &cfg).unwrap();
    let burn = 1000;
    let (mean, std) = ftg_core::samplers::posterior_summary(&chain, burn).unwrap();
    let sd_exact: Vec<f64> = exact.variances().iter().map(|v| v.sqrt()).collect();
    let mut worst_z = 0.0f64;
    let mut worst_sd = 0.0f64;
    for k in 0..d {
        let ess = per_coordinate_ess(&chain, burn, k);
        let mcse = std.values()[k] / ess.sqrt();
        worst_z = worst_z.max((mean.values()[k] - exact.mean()[k]).abs() / mcse);
        worst_sd = worst_sd.max((std.values()[k] / sd_exact[k] - 1.0).abs());
    }
    report(
        2,
        "conjugate-Gaussian oracle",
        worst_z <= 3.0 && worst_sd <= 0.05,
        format!(
            "max |mean error|/MCSE = {worst_z:.2} (tol 3), max relative std error = {worst_sd:.3} (tol 0.05), acceptance {:.3}",
            chain.acceptance_rate()
        ),
    );
}

/// Two-dimensional FTG posterior with a fixed λ.
fn toy_posterior() -> (HierarchicalPosterior, f64) {
    let grid = Grid::line(0.0, 1.0, 2).unwrap();
    let post = HierarchicalPosterior::new(
        identity_model(grid, 0.5).unwrap(),
        vec![0.6, -0.2],
        GaussianMeasure::isotropic(2, 1.0).unwrap(),
        FtvOperator::new(GrunwaldWeights::for_axis_len(0.8, 2).unwrap(), Boundary::ZeroExtended),
        HyperPrior::new(2.0, 1.0).unwrap(),
    )
    .unwrap();
    (post, 3.0)
}

const BOX: f64 = 2.5;
const BINS: usize = 50;

/// Bin probabilities of `exp(log_density)` by the composite trapezoid rule,
/// normalised over a box wide enough to hold all but negligible mass.
fn quadrature_bins(post: &HierarchicalPosterior, lambda: f64) -> Vec<f64> {
    let density = |x: f64, y: f64| post.log_density(&[x, y], lambda, false).unwrap();
    let trapezoid = |lo: (f64, f64), hi: (f64, f64), n: usize, shift: f64| -> f64 {
        let (hx, hy) = ((hi.0 - lo.0) / n as f64, (hi.1 - lo.1) / n as f64);
        let mut s = 0.0;
        for i in 0..=n {
            let wx = if i == 0 || i == n { 0.5 } else { 1.0 };
            for j in 0..=n {
                let wy = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += wx * wy * (density(lo.0 + i as f64 * hx, lo.1 + j as f64 * hy) - shift).exp();
            }
        }
        s * hx * hy
    };
    let shift = density(0.4, -0.1);
    let total = trapezoid((-7.0, -7.0), (7.0, 7.0), 1400, shift);
    let w = 2.0 * BOX / BINS as f64;
    let mut p = Vec::with_capacity(BINS * BINS);
    for i in 0..BINS {
        for j in 0..BINS {
            let lo = (-BOX + i as f64 * w, -BOX + j as f64 * w);
            p.push(trapezoid(lo, (lo.0 + w, lo.1 + w), 8, shift) / total);
        }
    }
    p
}

/// Chi-square goodness of fit of IAT-thinned chain states against the bin
/// probabilities; bins with expected count below 5 are pooled with the
/// mass outside the box.
fn chi_square_p(chain: &Chain, probs: &[f64], burn: usize) -> (f64, usize, usize) {
    let tau = (0..2)
        .map(|k| {
            let t = chain.coordinate_trace(k).unwrap();
            1.0 + 2.0 * autocorrelation(&t[burn..], 1000).unwrap().iat
        })
        .fold(1.0f64, f64::max);
    let thin = tau.ceil() as usize;
    let kept: Vec<&Vec<f64>> = chain.samples[burn..].iter().step_by(thin).collect();
    let n = kept.len() as f64;
    let w = 2.0 * BOX / BINS as f64;
    let mut observed = vec![0.0; BINS * BINS];
    let mut outside = 0.0;
    for s in &kept {
        let i = ((s[0] + BOX) / w).floor();
        let j = ((s[1] + BOX) / w).floor();
        if (0.0..BINS as f64).contains(&i) && (0.0..BINS as f64).contains(&j) {
            observed[i as usize * BINS + j as usize] += 1.0;
        } else {
            outside += 1.0;
        }
    }
    let (mut pooled_e, mut pooled_o) = (n * (1.0 - probs.iter().sum::<f64>()).max(0.0), outside);
    let mut stat = 0.0;
    let mut cells = 0;
    for (p, o) in probs.iter().zip(&observed) {
        let e = n * p;
        if e < 5.0 {
            pooled_e += e;
            pooled_o += o;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_e > 0.0 {
        stat += (pooled_o - pooled_e).powi(2) / pooled_e;
        cells += 1;
    }
    let dist = ChiSquared::new((cells - 1) as f64).unwrap();
    (1.0 - dist.cdf(stat), cells, thin)
}

#[test]
fn criterion_03_quadrature_invariance() {
    let (post, lambda) = toy_posterior();
    let probs = quadrature_bins(&post, lambda);
    let steps = 100_000;
    let burn = 1000;

    let mut pcn = PcnConfig::new(0.6, steps, lambda, 11);
    pcn.initial = Some(vec![0.0, 0.0]);
    let pcn_chain = pcn_sample(&post, &pcn).unwrap();
    let (p_pcn, cells_pcn, thin_pcn) = chi_square_p(&pcn_chain, &probs, burn);

    let built = build_map(
        &post,
        &MapBuilderConfig {
            saa_count: 500,
            ..MapBuilderConfig::default()
        },
    )
    .unwrap();
    let tmis = TmisConfig::new(built.map, steps, lambda, 12);
    let tmis_chain = tmis_sample(&post, &tmis).unwrap();
    let (p_tmis, cells_tmis, thin_tmis) = chi_square_p(&tmis_chain, &probs, burn);

    report(
        3,
        "quadrature invariance",
        p_pcn >= 0.01 && p_tmis >= 0.01,
        format!(
            "pCN p = {p_pcn:.3} ({cells_pcn} cells, thin {thin_pcn}), tmis p = {p_tmis:.3} ({cells_tmis} cells, thin {thin_tmis}); level 0.01"
        ),
    );
}

fn deconv_run(alpha: f64, percent: f64, k: f64, vartheta: f64) -> experiment::ExperimentRun {
    let mut c = bundled("deconv_1pct_alpha095");
    c.alpha = alpha;
    c.noise = Noise::Percent { percent };
    c.hyper.k = k;
    c.hyper.vartheta = vartheta;
    experiment::run(&c).unwrap()
}

#[test]
fn criterion_04_deconvolution_reproduction() {
    let tg = deconv_run(1.0, 1.0, 2000.0, 1.0).summary.metrics["rel_err"];
    let ftg = deconv_run(0.95, 1.0, 2000.0, 1.0).summary.metrics["rel_err"];
    report(
        4,
        "deconvolution reproduction",
        (0.05..=0.13).contains(&tg) && ftg <= tg + 0.01,
        format!("TG RelErr {tg:.4} (range [0.05, 0.13]), FTG α=0.95 RelErr {ftg:.4} (≤ TG + 0.01)"),
    );
}

#[test]
fn criterion_05_noise_monotonicity() {
    let mut lines = Vec::new();
    let mut ok = true;
    for alpha in [1.0, 0.95] {
        let runs: Vec<(f64, f64)> = [5.0, 1.0, 0.5]
            .iter()
            .map(|&p| {
                let m = deconv_run(alpha, p, 2000.0, 1.0).summary.metrics;
                (m["rel_err"], m["mean_posterior_std"])
            })
            .collect();
        let err_dec = runs.windows(2).all(|w| w[1].0 < w[0].0);
        let std_dec = runs.windows(2).all(|w| w[1].1 < w[0].1);
        ok &= err_dec && std_dec;
        lines.push(format!(
            "α={alpha}: RelErr {:.4}/{:.4}/{:.4}, mean std {:.3e}/{:.3e}/{:.3e}",
            runs[0].0, runs[1].0, runs[2].0, runs[0].1, runs[1].1, runs[2].1
        ));
    }
    report(5, "noise monotonicity (5% → 1% → 0.5%)", ok, lines.join("; "));
}

#[test]
fn criterion_06_sampler_efficiency() {
    let mut c = bundled("heat_source_0p1pct_alpha11");
    c.problem = match c.problem {
        Problem::HeatSource {
            final_time,
            length,
            weight,
            ..
        } => Problem::HeatSource {
            nodes: 50,
            steps: 40,
            final_time,
            length,
            weight,
        },
        other => panic!("unexpected problem {other:?}"),
    };
    c.sampler.steps = 50_000;
    c.sampler.burn_in = 5_000;
    let setup = experiment::setup(&c).unwrap();
    let map = experiment::construct_map(&setup, &c).unwrap();
    let tmis = experiment::run_sampler(&setup, &c, &map).unwrap();
    let tmis_ess = experiment::summarize(&setup, &c, &map, &tmis).unwrap().metrics["ess_median"];

    let mut p = c.clone();
    p.sampler.kind = SamplerKind::Pcn;
    let pcn = experiment::run_sampler(&setup, &p, &map).unwrap();
    let pcn_metrics = experiment::summarize(&setup, &p, &map, &pcn).unwrap().metrics;
    let pcn_ess = pcn_metrics["ess_median"];
    let acc = pcn.chain.acceptance_rate();

    // for reference only: full Metropolis-Hastings ratio against the prior
    let mut e = c.clone();
    e.sampler.rule = AcceptanceRule::Exact;
    e.sampler.reference_std = None;
    let exact = experiment::run_sampler(&setup, &e, &map).unwrap();
    let exact_ess = experiment::summarize(&setup, &e, &map, &exact).unwrap().metrics["ess_median"];
    report(
        6,
        "sampler efficiency",
        tmis_ess >= 3.0 * pcn_ess && (0.2..=0.3).contains(&acc),
        format!(
            "median ESS tmis {tmis_ess:.1} vs pCN {pcn_ess:.1} (ratio {:.1}, need ≥ 3); pCN β {:.3e}, acceptance {acc:.3}; \
             exact-ratio tmis with prior reference {exact_ess:.1} (not asserted)",
            tmis_ess / pcn_ess,
            pcn_metrics["beta"]
        ),
    );
}

/// Bundled experiment shrunk to a size where four map builds take seconds.
fn reduced(name: &str) -> ExperimentConfig {
    let mut c = bundled(name);
    c.problem = match c.problem {
        Problem::Deconvolution { delta, .. } => Problem::Deconvolution { cells: 60, delta },
        Problem::HeatSource {
            final_time,
            length,
            weight,
            ..
        } => Problem::HeatSource {
            nodes: 50,
            steps: 40,
            final_time,
            length,
            weight,
        },
        Problem::Ct { angles, .. } => Problem::Ct {
            pixels: 32,
            angles: angles / 2,
            rays: 47,
        },
        Problem::Denoise { .. } => Problem::Denoise { pixels: 32 },
    };
    c.map.saa_count = 200;
    c
}

#[test]
fn criterion_07_alternating_descent() {
    let mut ok = true;
    let mut lines = Vec::new();
    for name in [
        "deconv_1pct_alpha095",
        "heat_source_0p1pct_alpha11",
        "ct_shepp_logan_alpha11",
        "denoise_alpha15",
    ] {
        let c = reduced(name);
        assert_eq!(c.map.lambda_rule, LambdaRule::SampleAverage);
        let setup = experiment::setup(&c).unwrap();
        let built = experiment::construct_map(&setup, &c).unwrap();
        let rises = built
            .objective_trace
            .windows(2)
            .filter(|w| w[1] > w[0])
            .count();
        let cfg = c.map.builder_config(c.seed);
        let problem = SaaProblem::new(&setup.posterior, setup.posterior.prior().sample(cfg.saa_count, cfg.seed)).unwrap();
        let mean_ftv = problem
            .evaluate(&built.map.offset(), &built.map.slope(), built.lambda, false)
            .unwrap()
            .mean_ftv;
        let hyper = setup.posterior.hyper();
        let residual = hyper.rate() + 0.5 * mean_ftv - (hyper.shape() - 1.0) / built.lambda;
        ok &= rises == 0 && built.lambda > 0.0 && residual.abs() < 1e-8;
        lines.push(format!(
            "{name}: {} trace points, {rises} rises, λ = {:.4e}, residual {:.1e}",
            built.objective_trace.len(),
            built.lambda,
            residual
        ));
    }
    report(7, "alternating-direction descent", ok, lines.join("; "));
}

#[test]
fn criterion_08_hyperparameter_robustness() {
    let errs: Vec<f64> = [(3000.0, 1.0), (2500.0, 1.0), (2000.0, 1.0), (2000.0, 0.1), (2000.0, 0.01)]
        .iter()
        .map(|&(k, t)| deconv_run(0.95, 1.0, k, t).summary.metrics["rel_err"])
        .collect();
    let lo = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report(
        8,
        "hyper-parameter robustness",
        hi - lo < 0.02,
        format!("RelErr over (k, ϑ) grid {errs:.4?}, spread {:.4} (< 0.02)", hi - lo),
    );
}

/// Chord of the line `x cos θ + y sin θ = s` through `[-w, w]²`.
fn chord(w: f64, theta: f64, s: f64) -> f64 {
    let (c, sn) = (theta.cos(), theta.sin());
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    // point s·(c, sn) + t·(-sn, c)
    for (p, d) in [(s * c, -sn), (s * sn, c)] {
        if d.abs() < 1e-15 {
            if p.abs() > w {
                return 0.0;
            }
        } else {
            let (a, b) = ((-w - p) / d, (w - p) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t1 - t0).max(0.0)
}

#[test]
fn criterion_09_radon_geometry() {
    let c = bundled("ct_shepp_logan_alpha11");
    let (pixels, angles, rays) = match c.problem {
        Problem::Ct { pixels, angles, rays } => (pixels, angles, rays),
        other => panic!("unexpected problem {other:?}"),
    };
    let w = pixels as f64 / 2.0;
    let grid = Grid::square(-w, w, pixels).unwrap();
    let mut rng = seeded_rng(9, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let s = rng.random_range(-1.5 * w..1.5 * w);
        let sum: f64 = ray_cell_lengths(&grid, theta, s).iter().map(|e| e.1).sum();
        worst = worst.max((sum - chord(w, theta, s)).abs());
    }

    let geometry = RayGeometry::parallel_beam(angles, rays, w).unwrap();
    let truth = Field::new(grid.clone(), shepp_logan(&SheppLoganSpec::new(pixels)).unwrap().into_values()).unwrap();
    let model = radon_model(grid.clone(), &geometry).unwrap();
    let recon = fbp(&model.apply(truth.values()), &geometry, &grid).unwrap();
    let err = rel_err(&recon, &truth).unwrap();
    report(
        9,
        "Radon geometry",
        worst < 1e-10 && err < 0.45,
        format!("max |row sum - chord| = {worst:.2e} (tol 1e-10); noiseless FBP RelErr {err:.4} (< 0.45)"),
    );
}

#[test]
fn criterion_10_image_pipelines() {
    let ct = experiment::run(&bundled("ct_shepp_logan_alpha11")).unwrap().summary.metrics;
    let base = bundled("denoise_alpha15");
    let mut ssim = Vec::new();
    let mut noisy = 0.0;
    for alpha in [1.0, 1.1, 1.5, 1.8] {
        let mut c = base.clone();
        c.alpha = alpha;
        let m = experiment::run(&c).unwrap().summary.metrics;
        noisy = m["ssim_baseline"];
        ssim.push(m["ssim"]);
    }
    let tg = ssim[0];
    let ok = ct["ssim"] > ct["ssim_baseline"]
        && ssim.iter().all(|&s| s > noisy)
        && ssim[1..].iter().all(|&s| s >= tg - 0.02);
    report(
        10,
        "CT and denoising pipelines",
        ok,
        format!(
            "CT SSIM {:.4} vs FBP {:.4}; denoising SSIM TG {tg:.4}, α=1.1/1.5/1.8 {:.4}/{:.4}/{:.4} vs noisy {noisy:.4}",
            ct["ssim"], ct["ssim_baseline"], ssim[1], ssim[2], ssim[3]
        ),
    );
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_11_gradient_checks() {
    let d = 12;
    let grid = Grid::line(0.0, 1.0, d).unwrap();
    let mut rng = seeded_rng(11, 0);
    let mut worst = [0.0f64; 3];
    for point in 0..20 {
        let alpha = [0.5, 0.95, 1.3, 1.8][point % 4];
        let ftv = FtvOperator::new(GrunwaldWeights::for_axis_len(alpha, d).unwrap(), Boundary::Interior);
        let eps = 1e-3;
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = |v: &[f64]| Field::new(grid.clone(), v.to_vec()).unwrap();

        let g = ftv.smoothed_gradient(&field(&u), eps).unwrap();
        let fd = central_difference(|v| ftv.norm_smoothed(&field(v), eps).unwrap(), &u, 1e-6);
        worst[0] = worst[0].max(rel_vec_err(&g, &fd));

        let model = convolution_model(d, 0.1, (0.0, 1.0)).unwrap().with_sigma(0.1).unwrap();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let post = HierarchicalPosterior::new(
            model,
            y,
            GaussianMeasure::squared_exponential(&grid, 0.5, 0.2).unwrap(),
            ftv.clone(),
            HyperPrior::new(50.0, 1.0).unwrap(),
        )
        .unwrap()
        .with_smoothing(eps)
        .unwrap();
        let lambda = 2.0;
        let g = post.grad_log_density(&u, lambda).unwrap();
        let fd = central_difference(|v| post.log_density(v, lambda, true).unwrap(), &u, 1e-6);
        worst[1] = worst[1].max(rel_vec_err(&g, &fd));

        let problem = SaaProblem::new(&post, post.prior().sample(40, point as u64)).unwrap();
        let a0: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let a1: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.5)).collect();
        let e = problem.evaluate(&a0, &a1, lambda, true).unwrap();
        let mut theta = a0.clone();
        theta.extend(&a1);
        let fd = central_difference(
            |t| problem.evaluate(&t[..d], &t[d..], lambda, false).unwrap().value,
            &theta,
            1e-6,
        );
        let mut g = e.grad_offset.clone();
        g.extend(&e.grad_slope);
        worst[2] = worst[2].max(rel_vec_err(&g, &fd));
    }
    report(
        11,
        "gradient checks",
        worst.iter().all(|&w| w < 1e-5),
        format!(
            "max relative error: smoothed FTV {:.1e}, log density {:.1e}, SAA objective {:.1e} (tol 1e-5)",
            worst[0], worst[1], worst[2]
        ),
    );
}
