use nalgebra::DMatrix;

use super::{LinearForwardModel, ModelKind, Operator};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Midpoint-rule Gaussian blur on `d` cells of `extent`:
/// `a_ij = h ξ exp(-((i-j)h)² / (2δ²))` with `ξ = 1/(δ√(2π))`.
///
/// The noise level is initialised to 1; set it with [`LinearForwardModel::with_sigma`].
pub fn convolution_model(d: usize, delta: f64, extent: (f64, f64)) -> Result<LinearForwardModel> {
    if d < 2 {
        return Err(Error::Domain(format!("need at least 2 cells, got {d}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("blur width must be positive, got {delta}")));
    }
    let grid = Grid::line(extent.0, extent.1, d)?;
    let h = grid.spacing()[0];
    let xi = 1.0 / (delta * (2.0 * std::f64::consts::PI).sqrt());
    let kernel: Vec<f64> = (0..d)
        .map(|k| {
            let s = k as f64 * h;
            h * xi * (-(s * s) / (2.0 * delta * delta)).exp()
        })
        .collect();
    let a = DMatrix::from_fn(d, d, |i, j| kernel[i.abs_diff(j)]);
    LinearForwardModel::new(Operator::Dense(a), 1.0, grid, ModelKind::Deconvolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn matrix(m: &LinearForwardModel) -> DMatrix<f64> {
        m.operator().to_dense()
    }

    #[test]
    fn diagonal_entry() {
        let m = convolution_model(120, 0.02, (0.0, 1.0)).unwrap();
        let expected = (1.0 / 120.0) / (0.02 * (2.0 * std::f64::consts::PI).sqrt());
        assert_relative_eq!(matrix(&m)[(7, 7)], expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.166226, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_toeplitz() {
        let a = matrix(&convolution_model(40, 0.05, (0.0, 1.0)).unwrap());
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(a[(i, j)], a[(j, i)]);
                if i > 0 && j > 0 {
                    assert_eq!(a[(i, j)], a[(i - 1, j - 1)]);
                }
            }
        }
    }

    #[test]
    fn five_widths_apart() {
        // h = 0.01, δ = 0.02: ten cells is five widths
        let a = matrix(&convolution_model(100, 0.02, (0.0, 1.0)).unwrap());
        assert_relative_eq!(a[(20, 30)] / a[(20, 20)], (-12.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn row_sums_bounded() {
        let a = matrix(&convolution_model(120, 0.02, (0.0, 1.0)).unwrap());
        for i in 0..120 {
            assert!(a.row(i).sum() <= 1.0 + 1e-3);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(convolution_model(1, 0.02, (0.0, 1.0)).is_err());
        assert!(convolution_model(10, 0.0, (0.0, 1.0)).is_err());
    }
}
