use serde::{Deserialize, Serialize};

use super::{CsrMatrix, LinearForwardModel, ModelKind, Operator};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Parallel-beam geometry. Ray `(θ, s)` is the line `x cos θ + y sin θ = s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayGeometry {
    pub angles: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl RayGeometry {
    /// `n_angles` angles uniform in `[0, π)` and `n_rays` offsets at the
    /// midpoints of a uniform partition of `[-D, D]`, where `D` is the
    /// half-diagonal of the square `[-half_width, half_width]²`.
    pub fn parallel_beam(n_angles: usize, n_rays: usize, half_width: f64) -> Result<Self> {
        if n_angles == 0 || n_rays == 0 {
            return Err(Error::Domain("need at least one angle and one ray".into()));
        }
        let diag = half_width * std::f64::consts::SQRT_2;
        let ds = 2.0 * diag / n_rays as f64;
        Ok(Self {
            angles: (0..n_angles)
                .map(|a| a as f64 * std::f64::consts::PI / n_angles as f64)
                .collect(),
            offsets: (0..n_rays).map(|r| -diag + (r as f64 + 0.5) * ds).collect(),
        })
    }

    pub fn n_rays(&self) -> usize {
        self.angles.len() * self.offsets.len()
    }

    /// `(θ, s)` for flat ray index (angle-major).
    pub fn ray(&self, i: usize) -> (f64, f64) {
        let r = self.offsets.len();
        (self.angles[i / r], self.offsets[i % r])
    }
}

/// Intersection lengths of one ray with the cells of a 2D grid, as
/// `(flat index, length)` pairs. Axis 0 is `y`, axis 1 is `x`.
pub fn ray_cell_lengths(grid: &Grid, angle: f64, offset: f64) -> Vec<(usize, f64)> {
    let axes = grid.axes();
    let (ay, ax) = (&axes[0], &axes[1]);
    let (c, s) = (angle.cos(), angle.sin());
    // p(t) = offset·(c, s) + t·(-s, c)
    let (px, py) = (offset * c, offset * s);
    let (dx, dy) = (-s, c);

    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (p, d, lo, hi) in [(px, dx, ax.lower, ax.upper), (py, dy, ay.lower, ay.upper)] {
        if d.abs() < 1e-15 {
            if p < lo || p > hi {
                return Vec::new();
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t1 <= t0 {
        return Vec::new();
    }

    let mut ts = vec![t0, t1];
    for (p, d, axis) in [(px, dx, ax), (py, dy, ay)] {
        if d.abs() < 1e-15 {
            continue;
        }
        let h = axis.spacing();
        for k in 1..axis.cells {
            let t = (axis.lower + k as f64 * h - p) / d;
            if t > t0 && t < t1 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);

    let cols = ax.cells;
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-14 {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let cell = |v: f64, axis: &crate::grid::Axis| {
            (((v - axis.lower) / axis.spacing()).floor().max(0.0) as usize).min(axis.cells - 1)
        };
        let col = cell(px + tm * dx, ax);
        let row = cell(py + tm * dy, ay);
        let idx = row * cols + col;
        match out.last_mut() {
            Some(last) if last.0 == idx => last.1 += len,
            _ => out.push((idx, len)),
        }
    }
    out
}

/// Exact ray–cell intersection lengths for every ray of `geometry` on a 2D grid.
pub fn radon_model(grid: Grid, geometry: &RayGeometry) -> Result<LinearForwardModel> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported("radon model needs a 2D grid".into()));
    }
    if geometry.n_rays() == 0 {
        return Err(Error::Domain("no rays".into()));
    }
    let rows = (0..geometry.n_rays())
        .map(|i| {
            let (theta, s) = geometry.ray(i);
            ray_cell_lengths(&grid, theta, s)
        })
        .collect();
    let a = CsrMatrix::from_rows(grid.len(), rows);
    LinearForwardModel::new(Operator::Sparse(a), 1.0, grid, ModelKind::Radon)
}

/// Linear interpolation from the rays of `fine` to the rays of `coarse`.
/// Both must share the same angles; offsets outside the fine range are clamped.
pub fn ray_interpolation(fine: &RayGeometry, coarse: &RayGeometry) -> Result<CsrMatrix> {
    if fine.angles != coarse.angles {
        return Err(Error::Domain("ray sets must share angles".into()));
    }
    let nf = fine.offsets.len();
    if nf < 2 || fine.offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("fine offsets must be increasing".into()));
    }
    let weights: Vec<Vec<(usize, f64)>> = coarse
        .offsets
        .iter()
        .map(|&s| {
            let k = fine.offsets.partition_point(|&f| f <= s);
            if k == 0 {
                vec![(0, 1.0)]
            } else if k == nf {
                vec![(nf - 1, 1.0)]
            } else {
                let (a, b) = (fine.offsets[k - 1], fine.offsets[k]);
                let w = (s - a) / (b - a);
                vec![(k - 1, 1.0 - w), (k, w)]
            }
        })
        .collect();
    let rows = (0..coarse.angles.len())
        .flat_map(|a| {
            weights.iter().map(move |ws| {
                ws.iter()
                    .filter(|(_, w)| *w != 0.0)
                    .map(|&(k, w)| (a * nf + k, w))
                    .collect()
            })
        })
        .collect();
    Ok(CsrMatrix::from_rows(fine.n_rays(), rows))
}

/// Ramp-filtered back-projection with linear interpolation in the offset.
/// Offsets must be uniformly spaced.
pub fn fbp(sinogram: &[f64], geometry: &RayGeometry, grid: &Grid) -> Result<Field> {
    if sinogram.len() != geometry.n_rays() {
        return Err(Error::DimensionMismatch {
            expected: geometry.n_rays(),
            actual: sinogram.len(),
        });
    }
    if grid.dim() != 2 {
        return Err(Error::Unsupported("back-projection needs a 2D grid".into()));
    }
    let nr = geometry.offsets.len();
    if nr < 2 {
        return Err(Error::Domain("need at least two offsets".into()));
    }
    let ds = geometry.offsets[1] - geometry.offsets[0];
    let s0 = geometry.offsets[0];

    // discrete Ram-Lak kernel
    let kernel: Vec<f64> = (0..nr)
        .map(|k| match k {
            0 => 1.0 / (4.0 * ds * ds),
            k if k % 2 == 1 => -1.0 / ((k * k) as f64 * std::f64::consts::PI.powi(2) * ds * ds),
            _ => 0.0,
        })
        .collect();
    let filtered: Vec<Vec<f64>> = sinogram
        .chunks(nr)
        .map(|p| {
            (0..nr)
                .map(|i| {
                    ds * (0..nr)
                        .map(|j| kernel[i.abs_diff(j)] * p[j])
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();

    let scale = std::f64::consts::PI / geometry.angles.len() as f64;
    let trig: Vec<(f64, f64)> = geometry.angles.iter().map(|t| (t.cos(), t.sin())).collect();
    Field::from_fn(grid.clone(), |p| {
        let (y, x) = (p[0], p[1]);
        let mut acc = 0.0;
        for ((c, s), q) in trig.iter().zip(&filtered) {
            let u = (x * c + y * s - s0) / ds;
            if u < 0.0 || u > (nr - 1) as f64 {
                continue;
            }
            let k = (u.floor() as usize).min(nr - 2);
            let w = u - k as f64;
            acc += (1.0 - w) * q[k] + w * q[k + 1];
        }
        acc * scale
    })
}
