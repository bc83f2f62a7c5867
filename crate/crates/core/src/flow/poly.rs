//! Per-pixel quadratic expansion `f(x) ≈ xᵀAx + bᵀx + c` by Gaussian-weighted
//! least squares, with `x = [Δrow, Δcol]` relative to the pixel.

use nalgebra::{SMatrix, SVector};

use super::{Field, FlowParams};
use crate::error::{Error, Result};

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpansion {
    pub h: usize,
    pub w: usize,
    /// Symmetric quadratic term per pixel; `a[p][0][1] == a[p][1][0]`.
    pub a: Vec<[[f64; 2]; 2]>,
    pub b: Vec<[f64; 2]>,
    pub c: Vec<f64>,
}

impl PolyExpansion {
    /// Evaluates the local model of pixel `(i, j)` at offset `(dr, dc)`.
    pub fn eval(&self, i: usize, j: usize, dr: f64, dc: f64) -> f64 {
        let p = i * self.w + j;
        let a = &self.a[p];
        let b = &self.b[p];
        a[0][0] * dr * dr
            + 2.0 * a[0][1] * dr * dc
            + a[1][1] * dc * dc
            + b[0] * dr
            + b[1] * dc
            + self.c[p]
    }

    pub fn b_row(&self) -> Vec<f64> {
        self.b.iter().map(|b| b[0]).collect()
    }

    pub fn b_col(&self) -> Vec<f64> {
        self.b.iter().map(|b| b[1]).collect()
    }
}

/// Basis `[1, r, c, r², c², rc]`.
fn basis(dr: f64, dc: f64) -> Vec6 {
    Vec6::new(1.0, dr, dc, dr * dr, dc * dc, dr * dc)
}

fn solve(g: Mat6, rhs: Vec6) -> Vec6 {
    if let Some(chol) = g.cholesky() {
        let x = chol.solve(&rhs);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    // Rank-deficient truncated windows: minimum-norm least squares.
    let tol = 1e-12 * g.norm().max(1.0);
    g.svd(true, true)
        .solve(&rhs, tol)
        .unwrap_or_else(|_| Vec6::zeros())
}

pub fn polynomial_expansion(frame: &Field, params: &FlowParams) -> Result<PolyExpansion> {
    if frame.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "polynomial expansion needs finite input; fill land cells first".into(),
        ));
    }
    let (h, w) = (frame.h, frame.w);
    let r = params.window_radius as isize;
    let sigma = params.gaussian_sigma;
    let weight = |dr: isize, dc: isize| {
        if sigma > 0.0 {
            (-((dr * dr + dc * dc) as f64) / (2.0 * sigma * sigma)).exp()
        } else {
            1.0
        }
    };

    // Every pixel whose window is not truncated shares one normal matrix.
    let mut interior: Option<nalgebra::Cholesky<f64, nalgebra::Const<6>>> = None;

    let mut a = Vec::with_capacity(h * w);
    let mut b = Vec::with_capacity(h * w);
    let mut c = Vec::with_capacity(h * w);
    for i in 0..h as isize {
        for j in 0..w as isize {
            let full = i >= r && j >= r && i + r < h as isize && j + r < w as isize;
            let mut g = Mat6::zeros();
            let mut rhs = Vec6::zeros();
            for dr in -r..=r {
                let ii = i + dr;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for dc in -r..=r {
                    let jj = j + dc;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let wt = weight(dr, dc);
                    let phi = basis(dr as f64, dc as f64);
                    rhs += phi * (wt * frame.get(ii as usize, jj as usize));
                    if !full || interior.is_none() {
                        g += phi * phi.transpose() * wt;
                    }
                }
            }
            let coef = if full {
                if interior.is_none() {
                    interior = g.cholesky();
                }
                match &interior {
                    Some(chol) => chol.solve(&rhs),
                    None => solve(g, rhs),
                }
            } else {
                solve(g, rhs)
            };
            let off = coef[5] / 2.0;
            a.push([[coef[3], off], [off, coef[4]]]);
            b.push([coef[1], coef[2]]);
            c.push(coef[0]);
        }
    }
    Ok(PolyExpansion { h, w, a, b, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> FlowParams {
        FlowParams::default()
    }

    fn interior(h: usize, w: usize, r: usize) -> impl Iterator<Item = (usize, usize)> {
        (r..h - r).flat_map(move |i| (r..w - r).map(move |j| (i, j)))
    }

    #[test]
    fn constant_field() {
        let f = Field::from_fn(16, 16, |_, _| 5.0);
        let p = polynomial_expansion(&f, &params()).unwrap();
        for (i, j) in interior(16, 16, 5) {
            let k = i * 16 + j;
            assert_abs_diff_eq!(p.c[k], 5.0, epsilon = 1e-10);
            assert_abs_diff_eq!(p.b[k][0], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(p.b[k][1], 0.0, epsilon = 1e-10);
            for row in p.a[k] {
                for v in row {
                    assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn linear_ramp() {
        let f = Field::from_fn(16, 16, |i, _| 2.0 * i as f64);
        let p = polynomial_expansion(&f, &params()).unwrap();
        for (i, j) in interior(16, 16, 5) {
            let k = i * 16 + j;
            assert_abs_diff_eq!(p.b[k][0], 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.b[k][1], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.c[k], 2.0 * i as f64, epsilon = 1e-9);
            assert_abs_diff_eq!(p.a[k][0][0], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn paraboloid() {
        let f = Field::from_fn(16, 16, |i, _| (i * i) as f64);
        let p = polynomial_expansion(&f, &params()).unwrap();
        for (i, j) in interior(16, 16, 5) {
            let a = p.a[i * 16 + j];
            assert_abs_diff_eq!(a[0][0], 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(a[0][1], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(a[1][1], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn quadratic_reconstruction_everywhere() {
        // An exact quadratic is fitted exactly even in truncated border windows.
        let q = |i: f64, j: f64| 0.3 * i * i - 0.2 * i * j + 0.1 * j * j + i - 2.0 * j + 4.0;
        let f = Field::from_fn(9, 7, |i, j| q(i as f64, j as f64));
        let p = polynomial_expansion(&f, &params()).unwrap();
        for i in 0..9 {
            for j in 0..7 {
                let k = i * 7 + j;
                assert_eq!(p.a[k][0][1].to_bits(), p.a[k][1][0].to_bits());
                let got = p.eval(i, j, 1.0, -1.0);
                assert_abs_diff_eq!(got, q(i as f64 + 1.0, j as f64 - 1.0), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn tiny_grid_is_finite() {
        let f = Field::from_fn(2, 2, |i, j| (i + 2 * j) as f64);
        let p = polynomial_expansion(&f, &params()).unwrap();
        assert!(p.c.iter().all(|v| v.is_finite()));
        assert!(p.b.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn nan_input_is_numeric_error() {
        let mut f = Field::zeros(4, 4);
        f.data[3] = f64::NAN;
        assert!(matches!(
            polynomial_expansion(&f, &params()),
            Err(Error::Numeric(_))
        ));
    }
}
