//! Dense optical flow from local polynomial expansion.
//!
//! Each frame is approximated around every pixel by a quadratic fitted with
//! Gaussian-weighted least squares ([`polynomial_expansion`]). Under brightness
//! constancy `f1(x) = f2(x + d)`, the intensity change is linear in the
//! displacement through the local gradient `b`, so `d` is found by solving the
//! Gaussian-weighted normal equations accumulated over a window. A smoothness
//! penalty `λ‖∇d‖²` is realized as a pull towards the 4-neighbour mean of the
//! current estimate, and the whole solve is run coarse to fine over a Gaussian
//! pyramid to capture displacements larger than the window.
//!
//! Displacements are `(u, v)` = (rows, cols) in cells per frame: a pattern
//! moving one row down between frames has `u = 1`.

mod field;
mod poly;

pub use field::Field;
pub use poly::{polynomial_expansion, PolyExpansion};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use field::{bilinear, gaussian_blur, radius_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// Half-width of the square neighbourhood used for fitting and for
    /// accumulating the normal equations.
    pub window_radius: usize,
    /// Sigma of the Gaussian weight over the neighbourhood.
    pub gaussian_sigma: f64,
    /// Smoothness weight λ, relative to unit-variance intensities.
    pub smoothness_lambda: f64,
    pub iterations: usize,
    pub post_smoothing_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 4,
            window_radius: 5,
            gaussian_sigma: 1.5,
            smoothness_lambda: 0.15,
            iterations: 3,
            post_smoothing_sigma: 1.0,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::Config("pyramid_levels must be at least 1".into()));
        }
        if self.window_radius == 0 {
            return Err(Error::Config("window_radius must be at least 1".into()));
        }
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !non_negative(self.gaussian_sigma)
            || self.gaussian_sigma == 0.0
            || !non_negative(self.smoothness_lambda)
            || !non_negative(self.post_smoothing_sigma)
        {
            return Err(Error::Config(format!("invalid flow parameters {:?}", self)));
        }
        Ok(())
    }
}

/// Per-pixel displacement `(u, v)` in (row, col) cells per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub h: usize,
    pub w: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField {
            h,
            w,
            u: vec![0.0; h * w],
            v: vec![0.0; h * w],
        }
    }

    pub fn uniform(h: usize, w: usize, u: f64, v: f64) -> Self {
        FlowField {
            h,
            w,
            u: vec![u; h * w],
            v: vec![v; h * w],
        }
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Mean `(u, v)` over the pixels accepted by `keep(row, col)`.
    pub fn mean_where(&self, keep: impl Fn(usize, usize) -> bool) -> (f64, f64) {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for i in 0..self.h {
            for j in 0..self.w {
                if keep(i, j) {
                    su += self.u[i * self.w + j];
                    sv += self.v[i * self.w + j];
                    n += 1;
                }
            }
        }
        if n == 0 {
            return (0.0, 0.0);
        }
        (su / n as f64, sv / n as f64)
    }

    pub fn mean(&self) -> (f64, f64) {
        self.mean_where(|_, _| true)
    }

    /// Anisotropic total variation: sum of absolute forward differences of
    /// both components.
    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        for comp in [&self.u, &self.v] {
            for i in 0..self.h {
                for j in 0..self.w {
                    let x = comp[i * self.w + j];
                    if i + 1 < self.h {
                        tv += (comp[(i + 1) * self.w + j] - x).abs();
                    }
                    if j + 1 < self.w {
                        tv += (comp[i * self.w + j + 1] - x).abs();
                    }
                }
            }
        }
        tv
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// One flow field per observation frame; the last duplicates the final pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub flows: Vec<FlowField>,
}

impl FlowSequence {
    /// Builds the `M`-long sequence from the `M - 1` pairwise flows.
    pub fn from_pairs(mut pairs: Vec<FlowField>) -> Result<Self> {
        let Some(last) = pairs.last().cloned() else {
            return Err(Error::Range(
                "flow sequence needs at least one frame pair".into(),
            ));
        };
        pairs.push(last);
        Ok(FlowSequence { flows: pairs })
    }

    /// Every flow set to the same uniform gate, for ablations.
    pub fn constant(m: usize, h: usize, w: usize, u: f64, v: f64) -> Self {
        FlowSequence {
            flows: vec![FlowField::uniform(h, w, u, v); m],
        }
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Row-direction components, `M × N` flattened.
    pub fn alpha_x(&self) -> Vec<f64> {
        self.flows
            .iter()
            .flat_map(|f| f.u.iter().copied())
            .collect()
    }

    /// Column-direction components, `M × N` flattened.
    pub fn alpha_y(&self) -> Vec<f64> {
        self.flows
            .iter()
            .flat_map(|f| f.v.iter().copied())
            .collect()
    }
}

/// Level 0 is `frame`; each further level is blurred and subsampled by two.
/// Levels that would drop below 2×2 are not built.
pub fn build_pyramid(frame: &Field, levels: usize) -> Vec<Field> {
    let mut pyramid = vec![frame.clone()];
    while pyramid.len() < levels.max(1) {
        let prev = pyramid.last().unwrap();
        let (h, w) = (prev.h / 2, prev.w / 2);
        if h < 2 || w < 2 {
            break;
        }
        let blurred = gaussian_blur(&prev.data, prev.h, prev.w, 1.0, radius_for(1.0));
        let data = (0..h)
            .flat_map(|i| (0..w).map(move |j| (i, j)))
            .map(|(i, j)| blurred[(2 * i) * prev.w + 2 * j])
            .collect();
        pyramid.push(Field { h, w, data });
    }
    pyramid
}

/// Pooled standard deviation of two frames, or 1 for flat input.
fn intensity_scale(f1: &Field, f2: &Field) -> f64 {
    let n = (f1.data.len() + f2.data.len()) as f64;
    let mean = f1.data.iter().chain(&f2.data).sum::<f64>() / n;
    let var = f1
        .data
        .iter()
        .chain(&f2.data)
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    if sd > 1e-12 {
        sd
    } else {
        1.0
    }
}

fn scaled(f: &Field, scale: f64) -> Field {
    Field {
        h: f.h,
        w: f.w,
        data: f.data.iter().map(|x| x / scale).collect(),
    }
}

/// Jacobi sweeps of the smoothness-coupled solve per warp iteration.
const SMOOTHING_SWEEPS: usize = 20;

/// 4-neighbour mean, with missing neighbours dropped at the border.
fn neighbour_mean(d: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (mut s, mut n) = (0.0, 0.0);
            if i > 0 {
                s += d[(i - 1) * w + j];
                n += 1.0;
            }
            if i + 1 < h {
                s += d[(i + 1) * w + j];
                n += 1.0;
            }
            if j > 0 {
                s += d[i * w + j - 1];
                n += 1.0;
            }
            if j + 1 < w {
                s += d[i * w + j + 1];
                n += 1.0;
            }
            out[i * w + j] = if n > 0.0 { s / n } else { d[i * w + j] };
        }
    }
    out
}

/// Single-scale flow from `f1` to `f2`, refined from `init`.
pub fn estimate_flow_pair(
    f1: &Field,
    f2: &Field,
    init: Option<&FlowField>,
    params: &FlowParams,
) -> Result<FlowField> {
    params.validate()?;
    if !f1.same_shape(f2) {
        return Err(Error::shape(
            "estimate_flow_pair",
            format!("{}x{} vs {}x{}", f1.h, f1.w, f2.h, f2.w),
        ));
    }
    if let Some(d) = init {
        if d.h != f1.h || d.w != f1.w {
            return Err(Error::shape(
                "estimate_flow_pair",
                format!("init {}x{} vs frames {}x{}", d.h, d.w, f1.h, f1.w),
            ));
        }
    }
    let (h, w) = (f1.h, f1.w);
    let scale = intensity_scale(f1, f2);
    let p1 = polynomial_expansion(&scaled(f1, scale), params)?;
    let p2 = polynomial_expansion(&scaled(f2, scale), params)?;
    let (b2r, b2c) = (p2.b_row(), p2.b_col());

    let mut flow = init.cloned().unwrap_or_else(|| FlowField::zeros(h, w));
    let lambda = params.smoothness_lambda;
    let radius = params.window_radius;
    let sigma = params.gaussian_sigma;

    let n = h * w;
    let mut grr = vec![0.0; n];
    let mut grc = vec![0.0; n];
    let mut gcc = vec![0.0; n];
    let mut hr = vec![0.0; n];
    let mut hc = vec![0.0; n];
    for _ in 0..params.iterations {
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let (u, v) = (flow.u[p], flow.v[p]);
                let (row, col) = (i as f64 + u, j as f64 + v);
                let inside =
                    row >= 0.0 && col >= 0.0 && row <= (h - 1) as f64 && col <= (w - 1) as f64;
                if !inside {
                    // No data once the warp leaves the grid.
                    grr[p] = 0.0;
                    grc[p] = 0.0;
                    gcc[p] = 0.0;
                    hr[p] = 0.0;
                    hc[p] = 0.0;
                    continue;
                }
                let br = 0.5 * (p1.b[p][0] + bilinear(&b2r, h, w, row, col));
                let bc = 0.5 * (p1.b[p][1] + bilinear(&b2c, h, w, row, col));
                let dx = bilinear(&p2.c, h, w, row, col) - p1.c[p];
                // Constraint at this pixel: b̄ᵀ d = b̄ᵀ d_current - ΔX.
                let target = br * u + bc * v - dx;
                grr[p] = br * br;
                grc[p] = br * bc;
                gcc[p] = bc * bc;
                hr[p] = br * target;
                hc[p] = bc * target;
            }
        }
        let grr_w = gaussian_blur(&grr, h, w, sigma, radius);
        let grc_w = gaussian_blur(&grc, h, w, sigma, radius);
        let gcc_w = gaussian_blur(&gcc, h, w, sigma, radius);
        let hr_w = gaussian_blur(&hr, h, w, sigma, radius);
        let hc_w = gaussian_blur(&hc, h, w, sigma, radius);
        // Relax the smoothness coupling for the current linearization.
        for _ in 0..SMOOTHING_SWEEPS {
            let u_bar = neighbour_mean(&flow.u, h, w);
            let v_bar = neighbour_mean(&flow.v, h, w);
            let mut next = FlowField::zeros(h, w);
            for p in 0..n {
                let a = grr_w[p] + lambda;
                let b = grc_w[p];
                let d = gcc_w[p] + lambda;
                let rr = hr_w[p] + lambda * u_bar[p];
                let rc = hc_w[p] + lambda * v_bar[p];
                let det = a * d - b * b;
                if det.abs() > 1e-12 * (a.abs() + d.abs()).max(1e-12) {
                    next.u[p] = (d * rr - b * rc) / det;
                    next.v[p] = (a * rc - b * rr) / det;
                } else {
                    next.u[p] = u_bar[p];
                    next.v[p] = v_bar[p];
                }
            }
            flow = next;
        }
    }

    let ps = params.post_smoothing_sigma;
    if ps > 0.0 {
        flow.u = gaussian_blur(&flow.u, h, w, ps, radius_for(ps));
        flow.v = gaussian_blur(&flow.v, h, w, ps, radius_for(ps));
    }
    if !flow.is_finite() {
        return Err(Error::Numeric("flow estimate is not finite".into()));
    }
    Ok(flow)
}

/// Bilinear upsampling to `h × w` with displacements doubled.
fn upsample_flow(flow: &FlowField, h: usize, w: usize) -> FlowField {
    let mut out = FlowField::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let (r, c) = (i as f64 / 2.0, j as f64 / 2.0);
            out.u[i * w + j] = 2.0 * bilinear(&flow.u, flow.h, flow.w, r, c);
            out.v[i * w + j] = 2.0 * bilinear(&flow.v, flow.h, flow.w, r, c);
        }
    }
    out
}

/// Coarse-to-fine flow over a Gaussian pyramid.
pub fn estimate_flow_pyramidal(f1: &Field, f2: &Field, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if !f1.same_shape(f2) {
        return Err(Error::shape(
            "estimate_flow_pyramidal",
            format!("{}x{} vs {}x{}", f1.h, f1.w, f2.h, f2.w),
        ));
    }
    let mut pyr1 = build_pyramid(f1, params.pyramid_levels);
    let mut pyr2 = build_pyramid(f2, params.pyramid_levels);
    // Levels smaller than the expansion window carry no usable structure.
    let usable = pyr1
        .iter()
        .take_while(|l| l.h.min(l.w) > params.window_radius)
        .count()
        .max(1);
    pyr1.truncate(usable);
    pyr2.truncate(usable);
    let mut flow: Option<FlowField> = None;
    for level in (0..pyr1.len()).rev() {
        let (a, b) = (&pyr1[level], &pyr2[level]);
        let refined = match flow {
            None => estimate_flow_pair(a, b, None, params)?,
            Some(coarse) => {
                let init = upsample_flow(&coarse, a.h, a.w);
                let from_coarse = estimate_flow_pair(a, b, Some(&init), params)?;
                // Tiny coarse levels alias; keep the coarse guess only if it
                // explains the finer pair better than a fresh start.
                let from_zero = estimate_flow_pair(a, b, None, params)?;
                if warp_residual(a, b, &from_zero) < warp_residual(a, b, &from_coarse) {
                    from_zero
                } else {
                    from_coarse
                }
            }
        };
        flow = Some(refined);
    }
    Ok(flow.expect("pyramid has at least one level"))
}

/// Mean squared brightness-constancy residual `f2(x + d) - f1(x)` over pixels
/// whose warp stays on the grid.
pub fn warp_residual(f1: &Field, f2: &Field, flow: &FlowField) -> f64 {
    let (h, w) = (f1.h, f1.w);
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            let (row, col) = (i as f64 + flow.u[p], j as f64 + flow.v[p]);
            if row < 0.0 || col < 0.0 || row > (h - 1) as f64 || col > (w - 1) as f64 {
                continue;
            }
            let r = f2.bilinear(row, col) - f1.data[p];
            sum += r * r;
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Flows between consecutive frames of an `M × h × w` stack.
pub fn estimate_flow_sequence(
    frames: &[f64],
    h: usize,
    w: usize,
    params: &FlowParams,
) -> Result<FlowSequence> {
    let n = h * w;
    if n == 0 || !frames.len().is_multiple_of(n) {
        return Err(Error::shape(
            "estimate_flow_sequence",
            format!("{} values vs {}x{} frames", frames.len(), h, w),
        ));
    }
    let m = frames.len() / n;
    if m < 2 {
        return Err(Error::Range(format!(
            "flow sequence needs at least 2 frames, got {m}"
        )));
    }
    let fields: Vec<Field> = frames
        .chunks(n)
        .map(|c| Field::new(h, w, c.to_vec()))
        .collect::<Result<_>>()?;
    let pairs = fields
        .windows(2)
        .map(|pair| estimate_flow_pyramidal(&pair[0], &pair[1], params))
        .collect::<Result<Vec<_>>>()?;
    FlowSequence::from_pairs(pairs)
}
