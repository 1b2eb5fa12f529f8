use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Ellipse with intensity `value`, semi-axes `(a, b)`, centre and rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    const fn new(value: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Self {
        Self {
            value,
            a,
            b,
            x0,
            y0,
            phi_deg,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Contrast-enhanced Shepp–Logan ellipses on `[-1, 1]²`.
pub const MODIFIED_SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheppLoganSpec {
    pub resolution: usize,
    pub ellipses: Vec<Ellipse>,
}

impl SheppLoganSpec {
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            ellipses: MODIFIED_SHEPP_LOGAN.to_vec(),
        }
    }
}

/// Sum of ellipse intensities at pixel centres of `[-1, 1]²`, clipped to `[0, 1]`.
/// Row index increases with `y`.
pub fn shepp_logan(spec: &SheppLoganSpec) -> Result<Field> {
    if spec.resolution < 8 {
        return Err(Error::Domain(format!(
            "phantom resolution must be at least 8, got {}",
            spec.resolution
        )));
    }
    let grid = Grid::square(-1.0, 1.0, spec.resolution)?;
    Field::from_fn(grid, |p| {
        let (y, x) = (p[0], p[1]);
        spec.ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.value)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    })
}

/// Procedural grayscale scene on `[-1, 1]²` with values in `[0, 1]` and
/// maximum exactly 1: sky gradient, textured ground, a dark figure with a
/// tripod and camera, and a bright building with windows.
pub fn textured_image(pixels: usize) -> Result<Field> {
    if pixels < 8 {
        return Err(Error::Domain(format!("image needs at least 8 pixels, got {pixels}")));
    }
    let grid = Grid::square(-1.0, 1.0, pixels)?;
    let inside_ellipse = |x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64| {
        ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0
    };
    let near_segment = |x: f64, y: f64, (x0, y0): (f64, f64), (x1, y1): (f64, f64), w: f64| {
        let (dx, dy) = (x1 - x0, y1 - y0);
        let t = (((x - x0) * dx + (y - y0) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        let (px, py) = (x0 + t * dx, y0 + t * dy);
        ((x - px).powi(2) + (y - py).powi(2)).sqrt() <= w
    };
    Field::from_fn(grid, |p| {
        let (y, x) = (p[0], p[1]);
        let mut v = if y > -0.3 {
            0.72 + 0.12 * (y + 0.3) / 1.3
        } else {
            0.45 + 0.08 * (25.0 * x).sin() * (19.0 * y).sin() + 0.04 * (7.0 * x + 3.0 * y).cos()
        };
        if (0.55..=0.9).contains(&x) && (-0.3..=0.35).contains(&y) {
            let wx = ((x - 0.55) * 20.0).fract();
            let wy = ((y + 0.3) * 15.0).fract();
            v = if wx > 0.3 && wx < 0.7 && wy > 0.3 && wy < 0.7 {
                0.6
            } else {
                1.0
            };
        }
        let tripod = [(-0.35, -0.75), (0.05, -0.8), (-0.12, -0.7)];
        if tripod
            .iter()
            .any(|&foot| near_segment(x, y, foot, (-0.12, 0.15), 0.012))
        {
            v = 0.15;
        }
        if inside_ellipse(x, y, -0.45, -0.05, 0.2, 0.5) {
            v = 0.08 + 0.03 * (40.0 * y).sin();
        }
        if inside_ellipse(x, y, -0.45, 0.58, 0.11, 0.13) {
            v = 0.25;
        }
        if (-0.22..=-0.02).contains(&x) && (0.15..=0.32).contains(&y) {
            v = 0.05;
        }
        if inside_ellipse(x, y, -0.02, 0.235, 0.05, 0.05) {
            v = 0.35;
        }
        v.clamp(0.0, 1.0)
    })
}
