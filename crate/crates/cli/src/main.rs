//! `ftg`: config-driven experiment pipelines for fractional TV-Gaussian inversion.

mod artifacts;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ftg_core::diagnostics::{psnr, rel_err, ssim};
use ftg_core::experiment::{self, ChainDigest, ExperimentConfig, Problem};
use ftg_core::io::field_to_csv;

use artifacts::ArtifactDir;

#[derive(Debug, Parser)]
#[command(name = "ftg", version, about = "Bayesian inversion with fractional TV-Gaussian priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory; defaults to the config's `output` or `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the chain length.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the fractional order.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate truth and synthetic observations.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Also export the dense forward operator.
        #[arg(long)]
        export_model: bool,
    },
    /// Build the transport map and λ.
    BuildMap {
        #[command(flatten)]
        common: Common,
    },
    /// Sample with a previously built map.
    Sample {
        #[command(flatten)]
        common: Common,
        /// `map.json` written by `build-map` or `run`.
        #[arg(long)]
        map: PathBuf,
    },
    /// Recompute diagnostics from the artifacts of `sample` or `run`.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Directory holding the chain artifacts.
        #[arg(long)]
        input: PathBuf,
    },
    /// Full pipeline: data, map, sampling and diagnostics.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Filtered back-projection baseline for a CT config.
    Fbp {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut config: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", common.config.display()))?;
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(a) = common.alpha {
        config.alpha = a;
    }
    if let Some(n) = common.steps {
        config.sampler.steps = n;
        if config.sampler.burn_in >= n {
            config.sampler.burn_in = n / 10;
            eprintln!("ftg: burn-in reduced to {} for --steps {n}", config.sampler.burn_in);
        }
    }
    config.validate().context("invalid configuration")?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| Path::new("out").join(&config.name));
    Ok((config, out))
}

fn setup(config: &ExperimentConfig) -> Result<experiment::ExperimentSetup> {
    eprintln!("ftg: setting up {} (d = {})", config.name, config_dim(config));
    Ok(experiment::setup(config)?)
}

fn config_dim(config: &ExperimentConfig) -> usize {
    match config.problem {
        Problem::Deconvolution { cells, .. } => cells,
        Problem::HeatSource { nodes, .. } => nodes,
        Problem::Ct { pixels, .. } | Problem::Denoise { pixels } => pixels * pixels,
    }
}

fn sample_and_report(
    dir: &mut ArtifactDir,
    config: &ExperimentConfig,
    setup: &experiment::ExperimentSetup,
    map: &ftg_core::transport::MapBuildResult,
) -> Result<()> {
    eprintln!("ftg: sampling {} steps", config.sampler.steps);
    let outcome = experiment::run_sampler(setup, config, map).map_err(|e| e.at("sampling"))?;
    let digest = ChainDigest::new(&outcome, config.sampler.burn_in)?;
    pipeline::write_chain(dir, &digest, map.lambda)?;
    let summary = experiment::summarize_digest(setup, config, map, &digest).map_err(|e| e.at("diagnostics"))?;
    pipeline::write_diagnostics(dir, config, setup, map, &digest, &summary)
}

fn execute(command: Command) -> Result<PathBuf> {
    match command {
        Command::GenData { common, export_model } => {
            let (config, out) = load_config(&common)?;
            let setup = setup(&config)?;
            let mut dir = ArtifactDir::create(&out, "gen-data", &config.name)?;
            pipeline::write_inputs(&mut dir, &config, &setup)?;
            if export_model {
                pipeline::write_model(&mut dir, &setup)?;
            }
            dir.finish()
        }
        Command::BuildMap { common } => {
            let (config, out) = load_config(&common)?;
            let setup = setup(&config)?;
            let mut dir = ArtifactDir::create(&out, "build-map", &config.name)?;
            pipeline::write_inputs(&mut dir, &config, &setup)?;
            eprintln!("ftg: building map with M = {}", config.map.saa_count);
            let map = experiment::construct_map(&setup, &config)?;
            pipeline::write_map(&mut dir, &map)?;
            dir.finish()
        }
        Command::Sample { common, map } => {
            let (config, out) = load_config(&common)?;
            let setup = setup(&config)?;
            let built = pipeline::read_map(&map, &setup)?;
            let mut dir = ArtifactDir::create(&out, "sample", &config.name)?;
            pipeline::write_inputs(&mut dir, &config, &setup)?;
            pipeline::write_map(&mut dir, &built)?;
            sample_and_report(&mut dir, &config, &setup, &built)?;
            dir.finish()
        }
        Command::Diagnose { common, input } => {
            let (config, out) = load_config(&common)?;
            let setup = setup(&config)?;
            let map = pipeline::read_map(&input.join(pipeline::MAP), &setup)
                .context("diagnose needs the map.json of the run")?;
            let digest = pipeline::read_chain(&input)?;
            if digest.mean.len() != setup.posterior.dim() {
                bail!("chain artifacts do not match the configured problem");
            }
            let summary = experiment::summarize_digest(&setup, &config, &map, &digest).map_err(|e| e.at("diagnostics"))?;
            let mut dir = ArtifactDir::create(&out, "diagnose", &config.name)?;
            pipeline::write_diagnostics(&mut dir, &config, &setup, &map, &digest, &summary)?;
            dir.finish()
        }
        Command::Run { common } => {
            let (config, out) = load_config(&common)?;
            let setup = setup(&config)?;
            let mut dir = ArtifactDir::create(&out, "run", &config.name)?;
            pipeline::write_inputs(&mut dir, &config, &setup)?;
            eprintln!("ftg: building map with M = {}", config.map.saa_count);
            let map = experiment::construct_map(&setup, &config)?;
            pipeline::write_map(&mut dir, &map)?;
            sample_and_report(&mut dir, &config, &setup, &map)?;
            dir.finish()
        }
        Command::Fbp { common } => {
            let (config, out) = load_config(&common)?;
            if !matches!(config.problem, Problem::Ct { .. }) {
                bail!("fbp needs a CT configuration");
            }
            let setup = setup(&config)?;
            let recon = setup.baseline.as_ref().context("CT setup produced no FBP baseline")?;
            let t = setup.truth.values();
            let range = t.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t.iter().copied().fold(f64::INFINITY, f64::min);
            let mut metrics = std::collections::BTreeMap::new();
            metrics.insert("rel_err", rel_err(recon, &setup.truth)?);
            metrics.insert("ssim", ssim(recon, &setup.truth, range)?);
            metrics.insert("psnr", psnr(recon, &setup.truth, range)?);
            let mut dir = ArtifactDir::create(&out, "fbp", &config.name)?;
            pipeline::write_inputs(&mut dir, &config, &setup)?;
            dir.write("fbp.csv", "filtered back-projection reconstruction", field_to_csv(recon)?)?;
            dir.json("fbp.json", "FBP error measures", &metrics)?;
            dir.finish()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(out) => {
            eprintln!("ftg: artifacts in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
