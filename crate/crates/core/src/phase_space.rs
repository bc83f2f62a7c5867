//! Original and delay attractors of a window of observations.
//!
//! The original attractor stacks the `M` flattened frames of a window as rows.
//! The delay attractor of one grid point is the `L×M` Hankel matrix
//! `D[i][m] = s[m + i]`: column `m` is the length-`L` trajectory that starts at
//! window step `m`, so the last column holds the values from the final observed
//! step onwards. Forecasts are read from that last column (or from the mean of
//! each anti-diagonal of a predicted matrix).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `M×N` matrix whose row `m` is frame `m` flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginalAttractor {
    pub rows: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl OriginalAttractor {
    pub fn row(&self, m: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[m * n..(m + 1) * n]
    }

    /// Inverse of the flattening: frame `m` as `height` rows.
    pub fn unflatten(&self, m: usize) -> Vec<Vec<f64>> {
        self.row(m)
            .chunks(self.width)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// `L×M` Hankel matrix of one grid point's scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayAttractor {
    pub horizon: usize,
    pub window: usize,
    pub target_index: usize,
    /// Row-major `horizon × window`.
    pub values: Vec<f64>,
}

impl DelayAttractor {
    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.values[i * self.window + m]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.window)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// True when every anti-diagonal is constant.
    pub fn is_hankel(&self) -> bool {
        is_hankel(&self.values, self.horizon, self.window)
    }
}

pub fn is_hankel(values: &[f64], rows: usize, cols: usize) -> bool {
    (1..rows).all(|i| {
        (0..cols.saturating_sub(1))
            .all(|m| values[i * cols + m].to_bits() == values[(i - 1) * cols + m + 1].to_bits())
    })
}

/// `frames` is `M` frames of `height × width` values, concatenated.
pub fn build_original_attractor(
    frames: &[f64],
    height: usize,
    width: usize,
) -> Result<OriginalAttractor> {
    let n = height * width;
    if n == 0 || frames.is_empty() || !frames.len().is_multiple_of(n) {
        return Err(Error::Invariant(format!(
            "{} values do not form frames of {}x{}",
            frames.len(),
            height,
            width
        )));
    }
    Ok(OriginalAttractor {
        rows: frames.len() / n,
        height,
        width,
        values: frames.to_vec(),
    })
}

pub fn build_delay_attractor(
    series: &[f64],
    window: usize,
    horizon: usize,
    target_index: usize,
) -> Result<DelayAttractor> {
    if window == 0 || horizon == 0 {
        return Err(Error::Range("window and horizon must be at least 1".into()));
    }
    let needed = window + horizon - 1;
    if series.len() < needed {
        return Err(Error::Range(format!(
            "delay attractor needs {} values, series has {}",
            needed,
            series.len()
        )));
    }
    let mut values = Vec::with_capacity(horizon * window);
    for i in 0..horizon {
        values.extend_from_slice(&series[i..i + window]);
    }
    Ok(DelayAttractor {
        horizon,
        window,
        target_index,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMode {
    #[default]
    LastColumn,
    AntidiagonalMean,
}

impl std::str::FromStr for ExtractMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" | "last_column" => Ok(ExtractMode::LastColumn),
            "antidiag" | "antidiagonal_mean" => Ok(ExtractMode::AntidiagonalMean),
            other => Err(Error::Config(format!("unknown extract mode '{other}'"))),
        }
    }
}

/// Reads a length-`horizon` forecast out of a predicted `horizon × window`
/// delay attractor.
///
/// `forecast[i]` estimates the series at window step `window - 1 + i`.
pub fn extract_forecast(
    predicted: &[f64],
    horizon: usize,
    window: usize,
    mode: ExtractMode,
) -> Vec<f64> {
    assert_eq!(
        predicted.len(),
        horizon * window,
        "predicted attractor shape"
    );
    match mode {
        ExtractMode::LastColumn => (0..horizon)
            .map(|i| predicted[i * window + window - 1])
            .collect(),
        ExtractMode::AntidiagonalMean => (0..horizon)
            .map(|i| {
                let diag = window - 1 + i;
                let cells: Vec<f64> = (0..horizon)
                    .filter(|&r| diag >= r && diag - r < window)
                    .map(|r| predicted[r * window + diag - r])
                    .collect();
                // Offsets from the first cell keep constant diagonals bit-exact.
                let pivot = cells[0];
                pivot + cells.iter().map(|v| v - pivot).sum::<f64>() / cells.len() as f64
            })
            .collect(),
    }
}

/// Whether an embedding of length `horizon` exceeds twice the attractor
/// dimension `dim`. Logs a warning when it does not.
pub fn embedding_dimension_ok(horizon: usize, dim: f64) -> bool {
    let ok = horizon as f64 > 2.0 * dim;
    if !ok {
        log::warn!(
            "embedding length {} does not exceed 2 x attractor dimension {}",
            horizon,
            dim
        );
    }
    ok
}
