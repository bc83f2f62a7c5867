use serde::{Deserialize, Serialize};

use super::Trained;
use crate::error::{Error, Result};
use crate::grid::WindowSample;
use crate::phase_space::{extract_forecast, ExtractMode};

/// Root mean square error of equal-length sequences.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, "rmse")?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, "mape")?;
    if let Some(t) = truth.iter().find(|t| t.abs() <= 1e-6) {
        return Err(Error::Range(format!(
            "mape is undefined for truth value {t}"
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| ((p - t) / t).abs())
        .sum();
    Ok(100.0 * sum / pred.len() as f64)
}

fn check_pair(pred: &[f64], truth: &[f64], op: &'static str) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            op,
            format!("{} predictions vs {} truths", pred.len(), truth.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Range(format!("{op} of an empty sequence")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub window_start: usize,
    pub rmse: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// °C, pooled over every sample and forecast step.
    pub rmse: f64,
    /// Percent, pooled likewise.
    pub mape: f64,
    pub per_window: Vec<WindowMetrics>,
    pub loss_curve: Vec<f64>,
}

impl EvalReport {
    pub fn per_window_csv(&self) -> String {
        let mut out = String::from("window_start,rmse,mape\n");
        for w in &self.per_window {
            out.push_str(&format!("{},{},{}\n", w.window_start, w.rmse, w.mape));
        }
        out
    }
}

/// Scores length-`L` forecasts against each sample's truth.
pub fn evaluate_forecasts(samples: &[WindowSample], forecasts: &[Vec<f64>]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Range("empty test set".into()));
    }
    if samples.len() != forecasts.len() {
        return Err(Error::shape(
            "evaluate",
            format!("{} samples vs {} forecasts", samples.len(), forecasts.len()),
        ));
    }
    let mut all_pred = Vec::new();
    let mut all_truth = Vec::new();
    let mut per_window = Vec::with_capacity(samples.len());
    for (s, f) in samples.iter().zip(forecasts) {
        let truth = s.forecast_truth();
        per_window.push(WindowMetrics {
            window_start: s.window_start,
            rmse: rmse(f, &truth)?,
            mape: mape(f, &truth)?,
        });
        all_pred.extend_from_slice(f);
        all_truth.extend(truth);
    }
    Ok(EvalReport {
        rmse: rmse(&all_pred, &all_truth)?,
        mape: mape(&all_pred, &all_truth)?,
        per_window,
        loss_curve: Vec::new(),
    })
}

/// Forecasts every test sample with the trained network.
pub fn evaluate(
    trained: &Trained,
    samples: &[WindowSample],
    mode: ExtractMode,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Range("empty test set".into()));
    }
    let attractors = trained.predict_attractors(samples)?;
    let forecasts: Vec<Vec<f64>> = attractors
        .iter()
        .zip(samples)
        .map(|(d, s)| extract_forecast(d, s.horizon, s.window, mode))
        .collect();
    let mut report = evaluate_forecasts(samples, &forecasts)?;
    report.loss_curve = trained.loss_curve.clone();
    Ok(report)
}

/// Repeats the last observed target value over the whole horizon.
pub fn persistence_baseline(samples: &[WindowSample]) -> Result<EvalReport> {
    let forecasts: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| vec![s.last_observed(); s.horizon])
        .collect();
    evaluate_forecasts(samples, &forecasts)
}

/// Two-column `epoch,loss` CSV.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        generate_synthetic, sample_windows, GridMeta, GridSeries, SamplingConfig, SynthKind,
    };

    fn windows(series: &GridSeries, m: usize, l: usize) -> Vec<WindowSample> {
        let cfg = SamplingConfig {
            window: m,
            horizon: l,
            t_gap: 2,
            ..SamplingConfig::default()
        };
        sample_windows(series, &cfg, series.center_index()).unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[2.0, 2.0], &[0.0, 2.0]).unwrap(), 2f64.sqrt());
        assert_eq!(
            rmse(&[0.0, 0.0], &[1.0, 2.0]).unwrap(),
            (5.0f64 / 2.0).sqrt()
        );
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[3.0], &[3.0]).unwrap(), 0.0);
        assert!((mape(&[1.1], &[1.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Range(_))));
    }

    #[test]
    fn perfect_forecasts_score_zero() {
        let series = generate_synthetic(3, 40, 4, 4, SynthKind::Seasonal).unwrap();
        let samples = windows(&series, 6, 4);
        let forecasts: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                extract_forecast(
                    &s.delay_target,
                    s.horizon,
                    s.window,
                    ExtractMode::LastColumn,
                )
            })
            .collect();
        let r = evaluate_forecasts(&samples, &forecasts).unwrap();
        assert_eq!((r.rmse, r.mape), (0.0, 0.0));
        assert_eq!(r.per_window.len(), samples.len());
    }

    #[test]
    fn persistence_on_constant_field_is_exact() {
        let series = GridSeries::new(20, 3, 3, GridMeta::default(), vec![17.5; 180]).unwrap();
        let r = persistence_baseline(&windows(&series, 5, 4)).unwrap();
        assert_eq!(r.rmse, 0.0);
    }

    #[test]
    fn persistence_on_a_ramp() {
        // Truth starts at the last observed step, so the errors are 0 and 1.
        let data: Vec<f32> = (0..10).map(|t| 10.0 + t as f32).collect();
        let series = GridSeries::new(10, 1, 1, GridMeta::default(), data).unwrap();
        let r = persistence_baseline(&windows(&series, 3, 2)).unwrap();
        assert!((r.rmse - (0.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn persistence_on_seasonal_field_is_imperfect() {
        let series = generate_synthetic(3, 60, 4, 4, SynthKind::Seasonal).unwrap();
        let r = persistence_baseline(&windows(&series, 10, 10)).unwrap();
        assert!(r.rmse > 0.0);
    }

    #[test]
    fn empty_test_set_is_range_error() {
        assert!(matches!(evaluate_forecasts(&[], &[]), Err(Error::Range(_))));
    }

    #[test]
    fn loss_csv_has_header_and_rows() {
        assert_eq!(loss_curve_csv(&[0.5, 0.25]), "epoch,loss\n0,0.5\n1,0.25\n");
    }
}
