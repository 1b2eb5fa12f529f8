//! Reconstruction error metrics and MCMC efficiency diagnostics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;

fn same_grid(x: &Field, y: &Field) -> Result<()> {
    if x.grid() != y.grid() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// `‖x - truth‖₂ / ‖truth‖₂`.
pub fn rel_err(x: &Field, truth: &Field) -> Result<f64> {
    same_grid(x, truth)?;
    let norm: f64 = truth.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Domain("reference has zero norm".into()));
    }
    let diff: f64 = x
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub acf: Vec<f64>,
    /// `Σ_{t≥1} acf_t` over the initial positive sequence.
    pub iat: f64,
    /// `K / (1 + 2·iat)`, capped at `K`.
    pub ess: f64,
}

/// Biased sample autocorrelation via FFT, with Geyer's initial positive
/// sequence truncation for the integrated autocorrelation.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<AcfResult> {
    let n = series.len();
    if max_lag == 0 || n <= max_lag {
        return Err(Error::Domain(format!(
            "need series length {n} > max_lag {max_lag} ≥ 1"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) || var < 1e-300 {
        return Err(Error::ZeroVariance);
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64 * var);
    let full: Vec<f64> = buf.iter().take(n).map(|c| c.re * scale).collect();

    let mut acf = full[..=max_lag].to_vec();
    acf[0] = 1.0;
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = full[2 * m] + full[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let tau = tau.max(1.0);
    let iat = (tau - 1.0) / 2.0;
    Ok(AcfResult {
        lags: (0..=max_lag).collect(),
        acf,
        iat,
        ess: (n as f64 / tau).min(n as f64),
    })
}

/// Effective sample size of one scalar series.
pub fn ess(series: &[f64]) -> Result<f64> {
    Ok(autocorrelation(series, 1)?.ess)
}

pub const SSIM_WINDOW: usize = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean SSIM over all 8×8 windows with uniform weights and population
/// moments; `data_range` sets the stabilising constants.
pub fn ssim(x: &Field, y: &Field, data_range: f64) -> Result<f64> {
    same_grid(x, y)?;
    let shape = x.grid().shape();
    let [rows, cols] = shape[..] else {
        return Err(Error::Unsupported("SSIM needs 2D images".into()));
    };
    let w = SSIM_WINDOW;
    if rows < w || cols < w {
        return Err(Error::Domain(format!("image smaller than the {w}×{w} window")));
    }
    if !(data_range > 0.0) {
        return Err(Error::Domain("data range must be positive".into()));
    }
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);

    // summed-area tables of x, y, x², y², xy
    let (xv, yv) = (x.values(), y.values());
    let stride = cols + 1;
    let mut tables = vec![vec![0.0; (rows + 1) * stride]; 5];
    for r in 0..rows {
        for c in 0..cols {
            let (a, b) = (xv[r * cols + c], yv[r * cols + c]);
            let vals = [a, b, a * a, b * b, a * b];
            for (t, v) in tables.iter_mut().zip(vals) {
                t[(r + 1) * stride + c + 1] =
                    v + t[r * stride + c + 1] + t[(r + 1) * stride + c] - t[r * stride + c];
            }
        }
    }
    let area = (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=rows - w {
        for c in 0..=cols - w {
            let s: Vec<f64> = tables
                .iter()
                .map(|t| {
                    (t[(r + w) * stride + c + w] - t[r * stride + c + w] - t[(r + w) * stride + c]
                        + t[r * stride + c])
                        / area
                })
                .collect();
            let (mx, my) = (s[0], s[1]);
            let vx = s[2] - mx * mx;
            let vy = s[3] - my * my;
            let cxy = s[4] - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `10 log₁₀(peak² / MSE)`.
pub fn psnr(x: &Field, y: &Field, peak: f64) -> Result<f64> {
    same_grid(x, y)?;
    if !(peak > 0.0) {
        return Err(Error::Domain("peak must be positive".into()));
    }
    let mse = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR with the peak taken as the reference maximum.
pub fn psnr_against(x: &Field, truth: &Field) -> Result<f64> {
    let peak = truth.values().iter().cloned().fold(f64::MIN, f64::max);
    psnr(x, truth, peak)
}
