use serde::{Deserialize, Serialize};

use super::GridSeries;
use crate::error::{Error, Result};
use crate::phase_space::build_delay_attractor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Input length M.
    pub window: usize,
    /// Forecast horizon L.
    pub horizon: usize,
    /// Stride between the starts of adjacent windows.
    pub t_gap: usize,
    /// Subsampling stride over the time axis, applied before windowing.
    pub delta_t: usize,
    /// Fraction of frames used for training.
    pub split_ratio: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            window: 30,
            horizon: 30,
            t_gap: 5,
            delta_t: 1,
            split_ratio: 0.5,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.horizon < 1 || self.t_gap < 1 || self.delta_t < 1 {
            return Err(Error::Config(format!(
                "need window >= 2, horizon >= 1, t_gap >= 1, delta_t >= 1; got {:?}",
                self
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        Ok(())
    }

    /// Frames one sample spans: `M + L - 1`.
    pub fn span(&self) -> usize {
        self.window + self.horizon - 1
    }
}

/// One training or evaluation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `M × H × W` input frames; NaN cells are zero-filled.
    pub input_frames: Vec<f64>,
    pub height: usize,
    pub width: usize,
    /// Flattened row-major index of the target cell.
    pub target_index: usize,
    /// `L × M` Hankel matrix of the target cell, row-major.
    pub delay_target: Vec<f64>,
    /// Index (in the subsampled series) of the first input frame.
    pub window_start: usize,
    pub window: usize,
    pub horizon: usize,
}

impl WindowSample {
    /// Observed target values over the input window.
    pub fn target_history(&self) -> &[f64] {
        &self.delay_target[..self.window]
    }

    /// Ground truth aligned with the last column of the delay attractor:
    /// the series from the final observed step `M - 1` to `M + L - 2`.
    pub fn forecast_truth(&self) -> Vec<f64> {
        (0..self.horizon)
            .map(|i| self.delay_target[i * self.window + self.window - 1])
            .collect()
    }

    pub fn last_observed(&self) -> f64 {
        self.delay_target[self.window - 1]
    }

    pub fn frame(&self, m: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.input_frames[m * n..(m + 1) * n]
    }
}

/// Every `delta_t`-th frame, with `dt_days` scaled accordingly.
pub fn subsample(series: &GridSeries, delta_t: usize) -> Result<GridSeries> {
    if delta_t == 0 {
        return Err(Error::Config("delta_t must be at least 1".into()));
    }
    if delta_t == 1 {
        return Ok(series.clone());
    }
    let kept: Vec<usize> = (0..series.frames()).step_by(delta_t).collect();
    let mut data = Vec::with_capacity(kept.len() * series.cells());
    for &t in &kept {
        data.extend_from_slice(series.frame(t));
    }
    let mut meta = series.meta();
    meta.dt_days *= delta_t as f64;
    GridSeries::new(kept.len(), series.height(), series.width(), meta, data)
}

/// Sliding windows starting at `0, t_gap, 2·t_gap, …` of the
/// `delta_t`-subsampled series.
pub fn sample_windows(
    series: &GridSeries,
    cfg: &SamplingConfig,
    target_index: usize,
) -> Result<Vec<WindowSample>> {
    cfg.validate()?;
    let sub = subsample(series, cfg.delta_t)?;
    if sub.frames() < cfg.span() {
        return Err(Error::Range(format!(
            "{} frames after subsampling by {}, windows need {}",
            sub.frames(),
            cfg.delta_t,
            cfg.span()
        )));
    }
    let starts: Vec<usize> = (0..=sub.frames() - cfg.span()).step_by(cfg.t_gap).collect();
    build_samples(&sub, cfg, target_index, &starts)
}

/// Windows at explicit start indices of the `delta_t`-subsampled series.
pub fn sample_windows_at(
    series: &GridSeries,
    cfg: &SamplingConfig,
    target_index: usize,
    starts: &[usize],
) -> Result<Vec<WindowSample>> {
    cfg.validate()?;
    let sub = subsample(series, cfg.delta_t)?;
    if let Some(&bad) = starts.iter().find(|&&s| s + cfg.span() > sub.frames()) {
        return Err(Error::Range(format!(
            "window at {} needs {} frames, series has {}",
            bad,
            cfg.span(),
            sub.frames()
        )));
    }
    build_samples(&sub, cfg, target_index, starts)
}

fn build_samples(
    sub: &GridSeries,
    cfg: &SamplingConfig,
    target_index: usize,
    starts: &[usize],
) -> Result<Vec<WindowSample>> {
    if target_index >= sub.cells() {
        return Err(Error::Range(format!(
            "target index {} outside grid of {} cells",
            target_index,
            sub.cells()
        )));
    }
    let target = sub.point_series(target_index);
    let mut samples = Vec::with_capacity(starts.len());
    for &start in starts {
        let segment = &target[start..start + cfg.span()];
        if segment.iter().any(|v| v.is_nan()) {
            continue;
        }
        let attractor = build_delay_attractor(segment, cfg.window, cfg.horizon, target_index)?;
        let mut input_frames = Vec::with_capacity(cfg.window * sub.cells());
        for t in start..start + cfg.window {
            input_frames.extend(
                sub.frame(t)
                    .iter()
                    .map(|&v| if v.is_nan() { 0.0 } else { v as f64 }),
            );
        }
        samples.push(WindowSample {
            input_frames,
            height: sub.height(),
            width: sub.width(),
            target_index,
            delay_target: attractor.values,
            window_start: start,
            window: cfg.window,
            horizon: cfg.horizon,
        });
    }
    Ok(samples)
}
