use crate::error::{Error, Result};

/// A single `h × w` scalar field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::shape(
                "field",
                format!("{}x{} field with {} values", h, w, data.len()),
            ));
        }
        Ok(Field { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Field {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                data.push(f(i, j));
            }
        }
        Field { h, w, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.w + j]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.h == other.h && self.w == other.w
    }

    /// Bilinear sample at fractional `(row, col)`, clamped to the grid.
    pub fn bilinear(&self, row: f64, col: f64) -> f64 {
        bilinear(&self.data, self.h, self.w, row, col)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

pub(crate) fn bilinear(data: &[f64], h: usize, w: usize, row: f64, col: f64) -> f64 {
    let r = row.clamp(0.0, (h - 1) as f64);
    let c = col.clamp(0.0, (w - 1) as f64);
    let r0 = (r.floor() as usize).min(h - 1);
    let c0 = (c.floor() as usize).min(w - 1);
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let fr = r - r0 as f64;
    let fc = c - c0 as f64;
    let top = data[r0 * w + c0] * (1.0 - fc) + data[r0 * w + c1] * fc;
    let bottom = data[r1 * w + c0] * (1.0 - fc) + data[r1 * w + c1] * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Unnormalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub(crate) fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    (-r..=r)
        .map(|x| {
            if sigma > 0.0 {
                (-((x * x) as f64) / (2.0 * sigma * sigma)).exp()
            } else if x == 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Separable Gaussian blur. Taps that fall outside the grid are dropped and
/// the remaining weights renormalized.
pub(crate) fn gaussian_blur(
    data: &[f64],
    h: usize,
    w: usize,
    sigma: f64,
    radius: usize,
) -> Vec<f64> {
    if sigma <= 0.0 || radius == 0 {
        return data.to_vec();
    }
    let taps = gaussian_taps(sigma, radius);
    let r = radius as isize;
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, &t) in taps.iter().enumerate() {
                let jj = j as isize + k as isize - r;
                if jj >= 0 && (jj as usize) < w {
                    acc += t * data[i * w + jj as usize];
                    norm += t;
                }
            }
            tmp[i * w + j] = acc / norm;
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, &t) in taps.iter().enumerate() {
                let ii = i as isize + k as isize - r;
                if ii >= 0 && (ii as usize) < h {
                    acc += t * tmp[ii as usize * w + j];
                    norm += t;
                }
            }
            out[i * w + j] = acc / norm;
        }
    }
    out
}

/// Tap radius covering three standard deviations.
pub(crate) fn radius_for(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}
