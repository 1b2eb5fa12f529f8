//! Artifact writers and readers for each pipeline stage.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use ftg_core::diagnostics::autocorrelation;
use ftg_core::experiment::{ChainDigest, ExperimentConfig, ExperimentSetup, Summary};
use ftg_core::io::{columns_to_csv, field_from_csv, field_to_csv, matrix_from_csv, matrix_to_csv};
use ftg_core::transport::MapBuildResult;
use ftg_core::Field;
use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactDir;

pub const MAP: &str = "map.json";
const CHAIN: &str = "chain.csv";
const SAMPLER: &str = "sampler.json";
const MEAN: &str = "posterior_mean.csv";
const STD: &str = "posterior_std.csv";

/// ACF curves are exported for at most this many coordinates and lags.
const ACF_COORDS: usize = 4;
const ACF_LAGS: usize = 200;

#[derive(Debug, Serialize, Deserialize)]
struct SamplerRecord {
    acceptance_rate: f64,
    steps: usize,
    burn_in: usize,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pilot_acceptance: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DataRecord {
    noise_sigma: f64,
    likelihood_sigma: f64,
    observations: usize,
    unknowns: usize,
}

pub fn write_inputs(dir: &mut ArtifactDir, config: &ExperimentConfig, setup: &ExperimentSetup) -> Result<()> {
    dir.write("config.toml", "resolved configuration", toml::to_string(config)?)?;
    dir.write("truth.csv", "truth on the inference grid", field_to_csv(&setup.truth)?)?;
    let index: Vec<f64> = (0..setup.data.y.len()).map(|i| i as f64).collect();
    dir.write(
        "data.csv",
        "observations with their noise-free values",
        columns_to_csv(&["index", "y", "clean"], &[&index, &setup.data.y, &setup.data.clean])?,
    )?;
    let model = setup.posterior.model();
    dir.json(
        "data.json",
        "noise levels and problem size",
        &DataRecord {
            noise_sigma: setup.data.sigma,
            likelihood_sigma: model.sigma(),
            observations: model.n_obs(),
            unknowns: model.dim(),
        },
    )?;
    if let Some(g) = &setup.geometry {
        let rows: Vec<Vec<f64>> = setup.data.y.chunks(g.offsets.len()).map(<[f64]>::to_vec).collect();
        dir.write("sinogram.csv", "observed sinogram, one row per angle", matrix_to_csv(&rows))?;
    }
    if let Some(b) = &setup.baseline {
        let role = if setup.geometry.is_some() {
            "filtered back-projection baseline"
        } else {
            "noisy image baseline"
        };
        dir.write("baseline.csv", role, field_to_csv(b)?)?;
    }
    Ok(())
}

/// Dense forward operator, σ and the additive offset, if any.
pub fn write_model(dir: &mut ArtifactDir, setup: &ExperimentSetup) -> Result<()> {
    let model = setup.posterior.model();
    let a = model.operator().to_dense();
    let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect();
    dir.write("model_operator.csv", "forward operator, one row per observation", matrix_to_csv(&rows))?;
    if let Some(b) = model.offset() {
        dir.write("model_offset.csv", "additive forward-model offset", columns_to_csv(&["offset"], &[b])?)?;
    }
    dir.json(
        "model.json",
        "forward model metadata",
        &serde_json::json!({
            "sigma": model.sigma(),
            "observations": model.n_obs(),
            "unknowns": model.dim(),
            "has_offset": model.offset().is_some(),
        }),
    )
}

pub fn write_map(dir: &mut ArtifactDir, map: &MapBuildResult) -> Result<()> {
    dir.write(MAP, "transport map, lambda and optimisation traces", map.to_json()? + "\n")
}

pub fn read_map(path: &Path, setup: &ExperimentSetup) -> Result<MapBuildResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map = MapBuildResult::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        map.map.dim() == setup.posterior.dim(),
        "map dimension {} does not match the configured problem ({})",
        map.map.dim(),
        setup.posterior.dim()
    );
    Ok(map)
}

pub fn write_chain(dir: &mut ArtifactDir, digest: &ChainDigest, lambda: f64) -> Result<()> {
    let steps: Vec<f64> = (0..digest.steps).map(|s| s as f64).collect();
    let names: Vec<String> = digest.traces.iter().map(|(k, _)| format!("u{k}")).collect();
    let mut header = vec!["step"];
    header.extend(names.iter().map(String::as_str));
    let mut columns: Vec<&[f64]> = vec![&steps];
    columns.extend(digest.traces.iter().map(|(_, t)| t.as_slice()));
    dir.write("chain.csv", "per-step chain states of the traced coordinates", columns_to_csv(&header, &columns)?)?;
    dir.json(
        SAMPLER,
        "sampler statistics",
        &SamplerRecord {
            acceptance_rate: digest.acceptance_rate,
            steps: digest.steps,
            burn_in: digest.burn_in,
            lambda,
            beta: digest.beta.map(|b| b.0),
            pilot_acceptance: digest.beta.and_then(|b| b.1),
        },
    )?;
    dir.write(MEAN, "posterior mean after burn-in", field_to_csv(&digest.mean)?)?;
    dir.write(STD, "posterior standard deviation after burn-in", field_to_csv(&digest.std)?)
}

pub fn read_chain(input: &Path) -> Result<ChainDigest> {
    let read = |name: &str| -> Result<String> {
        let p = input.join(name);
        fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    };
    let record: SamplerRecord = serde_json::from_str(&read(SAMPLER)?).context("parsing sampler.json")?;
    let mean = field_from_csv(&read(MEAN)?).context("parsing posterior mean")?;
    let std = field_from_csv(&read(STD)?).context("parsing posterior std")?;

    let text = read(CHAIN)?;
    let (header, body) = text.split_once('\n').context("chain.csv is empty")?;
    let coords = header
        .split(',')
        .skip(1)
        .map(|c| {
            c.strip_prefix('u')
                .and_then(|k| k.parse::<usize>().ok())
                .with_context(|| format!("bad chain column {c:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = matrix_from_csv(body)?;
    if rows.len() != record.steps {
        bail!("chain.csv has {} rows, sampler.json says {} steps", rows.len(), record.steps);
    }
    let traces = coords
        .iter()
        .enumerate()
        .map(|(c, &k)| (k, rows.iter().map(|r| r[c + 1]).collect()))
        .collect();
    Ok(ChainDigest {
        mean,
        std,
        traces,
        acceptance_rate: record.acceptance_rate,
        steps: record.steps,
        burn_in: record.burn_in,
        beta: record.beta.map(|b| (b, record.pilot_acceptance)),
    })
}

#[derive(Debug, Serialize)]
struct SummaryRecord<'a> {
    experiment: &'a str,
    alpha: f64,
    seed: u64,
    lambda: f64,
    lambda_trace: &'a [f64],
    objective_trace: &'a [f64],
    metrics: &'a std::collections::BTreeMap<String, f64>,
}

pub fn write_diagnostics(
    dir: &mut ArtifactDir,
    config: &ExperimentConfig,
    setup: &ExperimentSetup,
    map: &MapBuildResult,
    digest: &ChainDigest,
    summary: &Summary,
) -> Result<()> {
    dir.json("diagnostics.json", "flat metric report", &summary.metrics)?;
    dir.json(
        "summary.json",
        "run summary with map traces",
        &SummaryRecord {
            experiment: &config.name,
            alpha: config.alpha,
            seed: config.seed,
            lambda: map.lambda,
            lambda_trace: &map.lambda_trace,
            objective_trace: &map.objective_trace,
            metrics: &summary.metrics,
        },
    )?;
    let (idx, ess): (Vec<f64>, Vec<f64>) = summary.ess.iter().map(|&(k, e)| (k as f64, e)).unzip();
    dir.write("ess.csv", "effective sample size per coordinate", columns_to_csv(&["coordinate", "ess"], &[&idx, &ess])?)?;
    write_acf(dir, digest)?;
    write_plots(dir, setup, summary)
}

fn write_acf(dir: &mut ArtifactDir, digest: &ChainDigest) -> Result<()> {
    let n = digest.traces.len();
    let picks: Vec<usize> = (0..ACF_COORDS.min(n)).map(|i| (2 * i + 1) * n / (2 * ACF_COORDS.min(n))).collect();
    let mut names = Vec::new();
    let mut curves = Vec::new();
    for &p in &picks {
        let (k, trace) = &digest.traces[p];
        let tail = &trace[digest.burn_in.min(trace.len())..];
        let lags = ACF_LAGS.min(tail.len() / 2);
        if lags == 0 {
            continue;
        }
        if let Ok(acf) = autocorrelation(tail, lags) {
            names.push(format!("u{k}"));
            curves.push(acf.acf);
        }
    }
    let Some(len) = curves.iter().map(Vec::len).min() else {
        return Ok(());
    };
    let lag: Vec<f64> = (0..len).map(|l| l as f64).collect();
    let mut header = vec!["lag"];
    header.extend(names.iter().map(String::as_str));
    let mut columns: Vec<&[f64]> = vec![&lag];
    columns.extend(curves.iter().map(|c| &c[..len]));
    dir.write("acf.csv", "autocorrelation curves after burn-in", columns_to_csv(&header, &columns)?)
}

fn write_plots(dir: &mut ArtifactDir, setup: &ExperimentSetup, summary: &Summary) -> Result<()> {
    let truth = setup.truth.values();
    let mean = summary.mean.values();
    let std = summary.std.values();
    let lower: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m - s).collect();
    let upper: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m + s).collect();
    let abs_err: Vec<f64> = mean.iter().zip(truth).map(|(m, t)| (m - t).abs()).collect();
    let grid = setup.truth.grid();
    if grid.dim() == 1 {
        let x = grid.coordinates();
        return dir.write(
            "plot_posterior.csv",
            "posterior mean with one-std band and absolute error",
            columns_to_csv(
                &["x", "truth", "mean", "mean_minus_std", "mean_plus_std", "std", "abs_error"],
                &[&x, truth, mean, &lower, &upper, std, &abs_err],
            )?,
        );
    }
    let image = |v: Vec<f64>| -> Result<String> { Ok(matrix_to_csv(&Field::new(grid.clone(), v)?.rows())) };
    dir.write("plot_mean.csv", "posterior mean image", image(mean.to_vec())?)?;
    dir.write("plot_std.csv", "posterior std image", image(std.to_vec())?)?;
    dir.write("plot_abs_error.csv", "absolute error image", image(abs_err)?)?;

    // horizontal line through the image centre
    let r = grid.shape()[0] / 2;
    let row = |f: &Field| f.row(r);
    let mean_f = &summary.mean;
    let x: Vec<f64> = (0..grid.shape()[1]).map(|c| grid.axes()[1].coordinate(c)).collect();
    let lo: Vec<f64> = row(mean_f).iter().zip(row(&summary.std)).map(|(m, s)| m - s).collect();
    let hi: Vec<f64> = row(mean_f).iter().zip(row(&summary.std)).map(|(m, s)| m + s).collect();
    let t = row(&setup.truth);
    let m = row(mean_f);
    let mut header = vec!["x", "truth", "mean", "mean_minus_std", "mean_plus_std"];
    let mut columns: Vec<&[f64]> = vec![&x, &t, &m, &lo, &hi];
    let b = setup.baseline.as_ref().map(row);
    if let Some(b) = &b {
        header.push("baseline");
        columns.push(b);
    }
    dir.write(
        "plot_line.csv",
        &format!("values along image row {r}"),
        columns_to_csv(&header, &columns)?,
    )
}
