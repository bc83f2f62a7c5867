//! Gridded scalar fields over time and the samples cut from them.

mod format;
mod synth;
mod window;

pub use format::{load_grid_series, save_grid_series, MAGIC, VERSION};
pub use synth::{generate_synthetic, generate_synthetic_with, SynthKind, SynthParams};
pub use window::{sample_windows, sample_windows_at, subsample, SamplingConfig, WindowSample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time-ordered stack of `t × h × w` fields in °C.
///
/// Cell `(row, col)` covers latitudes `[lat0 + row·dlat, lat0 + (row+1)·dlat)`
/// and likewise for longitude, so `(lat0, lon0)` is the south-west corner of
/// the grid. Land cells hold NaN.
#[derive(Debug, Clone)]
pub struct GridSeries {
    t: usize,
    h: usize,
    w: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    /// Days since 1970-01-01 of frame 0.
    pub t0: f64,
    pub dt_days: f64,
    data: Vec<f32>,
}

/// Geographic and temporal placement of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub t0: f64,
    pub dt_days: f64,
}

impl Default for GridMeta {
    fn default() -> Self {
        GridMeta {
            lat0: 20.0,
            lon0: -40.0,
            dlat: 0.25,
            dlon: 0.25,
            // 2020-01-01
            t0: 18262.0,
            dt_days: 1.0,
        }
    }
}

impl PartialEq for GridSeries {
    /// Bitwise comparison, so NaN land cells compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.meta_bits() == other.meta_bits()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl GridSeries {
    pub fn new(t: usize, h: usize, w: usize, meta: GridMeta, data: Vec<f32>) -> Result<Self> {
        let series = GridSeries {
            t,
            h,
            w,
            lat0: meta.lat0,
            lon0: meta.lon0,
            dlat: meta.dlat,
            dlon: meta.dlon,
            t0: meta.t0,
            dt_days: meta.dt_days,
            data,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::Invariant(format!(
                "dimensions must be positive, got T={} H={} W={}",
                self.t, self.h, self.w
            )));
        }
        if self.data.len() != self.t * self.h * self.w {
            return Err(Error::Invariant(format!(
                "payload has {} values, expected {}",
                self.data.len(),
                self.t * self.h * self.w
            )));
        }
        let m = self.meta();
        if ![m.lat0, m.lon0, m.dlat, m.dlon, m.t0, m.dt_days]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::Invariant("non-finite header value".into()));
        }
        if !(m.dt_days > 0.0 && m.dlat > 0.0 && m.dlon > 0.0) {
            return Err(Error::Invariant(
                "dt_days, dlat and dlon must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            lat0: self.lat0,
            lon0: self.lon0,
            dlat: self.dlat,
            dlon: self.dlon,
            t0: self.t0,
            dt_days: self.dt_days,
        }
    }

    fn meta_bits(&self) -> [u64; 6] {
        let m = self.meta();
        [m.lat0, m.lon0, m.dlat, m.dlon, m.t0, m.dt_days].map(f64::to_bits)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, t: usize, row: usize, col: usize) -> f32 {
        self.data[(t * self.h + row) * self.w + col]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.cells();
        &self.data[t * n..(t + 1) * n]
    }

    /// Scalar series of flattened cell `index`.
    pub fn point_series(&self, index: usize) -> Vec<f64> {
        (0..self.t)
            .map(|t| self.data[t * self.cells() + index] as f64)
            .collect()
    }

    /// Flattened index of the center cell, `⌊h/2⌋·w + ⌊w/2⌋`.
    pub fn center_index(&self) -> usize {
        (self.h / 2) * self.w + self.w / 2
    }

    /// Days since 1970-01-01 of frame `t`.
    pub fn epoch_day(&self, t: usize) -> f64 {
        self.t0 + t as f64 * self.dt_days
    }

    /// Frames `[start, end)` as a new series.
    pub fn slice_time(&self, start: usize, end: usize) -> Result<GridSeries> {
        if start >= end || end > self.t {
            return Err(Error::Range(format!(
                "time slice [{start}, {end}) outside 0..{}",
                self.t
            )));
        }
        let n = self.cells();
        let mut meta = self.meta();
        meta.t0 = self.epoch_day(start);
        GridSeries::new(
            end - start,
            self.h,
            self.w,
            meta,
            self.data[start * n..end * n].to_vec(),
        )
    }

    /// The `h × w` block whose top-left cell is `(row0, col0)`.
    pub fn extract_cells(
        &self,
        row0: usize,
        col0: usize,
        h: usize,
        w: usize,
    ) -> Result<GridSeries> {
        if h == 0 || w == 0 || row0 + h > self.h || col0 + w > self.w {
            return Err(Error::Range(format!(
                "block {}x{} at ({}, {}) exceeds grid {}x{}",
                h, w, row0, col0, self.h, self.w
            )));
        }
        let mut data = Vec::with_capacity(self.t * h * w);
        for t in 0..self.t {
            for r in row0..row0 + h {
                let start = (t * self.h + r) * self.w + col0;
                data.extend_from_slice(&self.data[start..start + w]);
            }
        }
        let mut meta = self.meta();
        meta.lat0 = self.lat0 + row0 as f64 * self.dlat;
        meta.lon0 = self.lon0 + col0 as f64 * self.dlon;
        GridSeries::new(self.t, h, w, meta, data)
    }

    /// Number of whole cells spanned by `span_deg` along each axis.
    pub fn cells_for_span(&self, span_deg: f64) -> (usize, usize) {
        (
            (span_deg / self.dlat + 1e-9).floor() as usize,
            (span_deg / self.dlon + 1e-9).floor() as usize,
        )
    }
}

/// Square box of `span_deg` centered on `(center_lat, center_lon)`.
pub fn extract_region(
    series: &GridSeries,
    center_lat: f64,
    center_lon: f64,
    span_deg: f64,
) -> Result<GridSeries> {
    let (rows, cols) = series.cells_for_span(span_deg);
    if rows == 0 || cols == 0 {
        return Err(Error::Range(format!(
            "span {span_deg}° is smaller than one cell"
        )));
    }
    let south = center_lat - rows as f64 * series.dlat / 2.0;
    let west = center_lon - cols as f64 * series.dlon / 2.0;
    let row0 = ((south - series.lat0) / series.dlat).round();
    let col0 = ((west - series.lon0) / series.dlon).round();
    if row0 < 0.0 || col0 < 0.0 {
        return Err(Error::Range(format!(
            "box around ({center_lat}, {center_lon}) with span {span_deg}° leaves the grid"
        )));
    }
    series.extract_cells(row0 as usize, col0 as usize, rows, cols)
}

/// Latitude/longitude of the geometric center of the grid.
pub fn grid_center(series: &GridSeries) -> (f64, f64) {
    (
        series.lat0 + series.h as f64 * series.dlat / 2.0,
        series.lon0 + series.w as f64 * series.dlon / 2.0,
    )
}

/// First `⌈ratio·T⌉` frames for training, the rest for testing.
pub fn temporal_split(series: &GridSeries, split_ratio: f64) -> Result<(GridSeries, GridSeries)> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::Config(format!(
            "split ratio must lie in (0, 1), got {split_ratio}"
        )));
    }
    if series.t < 2 {
        return Err(Error::Invariant("temporal split needs T >= 2".into()));
    }
    let n_train = (split_ratio * series.t as f64).ceil() as usize;
    if n_train >= series.t {
        return Err(Error::Invariant(format!(
            "ratio {split_ratio} leaves no test frames out of {}",
            series.t
        )));
    }
    Ok((
        series.slice_time(0, n_train)?,
        series.slice_time(n_train, series.t)?,
    ))
}
