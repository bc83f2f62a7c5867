//! Invariant checks shared by the property suite and the acceptance target.

#![allow(dead_code)]

use driftcast::flow::{estimate_flow_sequence, Field, FlowParams};
use driftcast::grid::{
    load_grid_series, sample_windows, save_grid_series, temporal_split, GridMeta, GridSeries,
    SamplingConfig,
};
use driftcast::model::{FlowGates, Model, ModelConfig};
use driftcast::phase_space::{build_delay_attractor, extract_forecast, is_hankel, ExtractMode};
use driftcast::tensor::Array;
use driftcast::train::{mape, rmse, Normalizer};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

pub type Check = std::result::Result<(), TestCaseError>;

/// Random `(series, window, horizon)` with enough values for one attractor.
pub fn attractor_input() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (2usize..12, 1usize..12).prop_flat_map(|(m, l)| {
        (
            prop::collection::vec(-5.0f64..35.0, m + l - 1..m + l + 20),
            Just(m),
            Just(l),
        )
    })
}

pub fn hankel_holds(values: &[f64], m: usize, l: usize) -> Check {
    let d = build_delay_attractor(values, m, l, 0).unwrap();
    prop_assert!(d.is_hankel());
    for i in 0..l {
        for j in 0..m {
            prop_assert_eq!(d.get(i, j).to_bits(), values[i + j].to_bits());
        }
    }
    Ok(())
}

/// Every sample drawn from a random grid carries a Hankel target.
pub fn sampled_targets_are_hankel(
    data: &[f32],
    t: usize,
    cells: (usize, usize),
    m: usize,
    l: usize,
    t_gap: usize,
) -> Check {
    let (h, w) = cells;
    let series = GridSeries::new(t, h, w, GridMeta::default(), data.to_vec()).unwrap();
    let cfg = SamplingConfig {
        window: m,
        horizon: l,
        t_gap,
        ..SamplingConfig::default()
    };
    for s in sample_windows(&series, &cfg, series.center_index()).unwrap() {
        prop_assert!(is_hankel(&s.delay_target, l, m));
        prop_assert_eq!(s.input_frames.len(), m * h * w);
    }
    Ok(())
}

pub fn extraction_modes_agree(values: &[f64], m: usize, l: usize) -> Check {
    let d = build_delay_attractor(values, m, l, 0).unwrap();
    let last = extract_forecast(&d.values, l, m, ExtractMode::LastColumn);
    let anti = extract_forecast(&d.values, l, m, ExtractMode::AntidiagonalMean);
    for (a, b) in last.iter().zip(&anti) {
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
    Ok(())
}

pub fn last_flow_duplicates_previous(frames: &[f64], h: usize, w: usize) -> Check {
    let params = FlowParams {
        pyramid_levels: 2,
        window_radius: 2,
        ..FlowParams::default()
    };
    let seq = estimate_flow_sequence(frames, h, w, &params).unwrap();
    let m = frames.len() / (h * w);
    prop_assert_eq!(seq.len(), m);
    prop_assert_eq!(&seq.flows[m - 1], &seq.flows[m - 2]);
    prop_assert!(seq.flows.iter().all(|f| f.is_finite()));
    Ok(())
}

pub fn grid_strategy() -> impl Strategy<Value = GridSeries> {
    (1usize..6, 1usize..5, 1usize..5).prop_flat_map(|(t, h, w)| {
        let value = prop_oneof![
            8 => any::<f32>(),
            1 => Just(f32::NAN),
        ];
        (
            prop::collection::vec(value, t * h * w),
            -90.0f64..90.0,
            -180.0f64..180.0,
            0.01f64..5.0,
            0.01f64..5.0,
            0.0f64..30000.0,
            0.1f64..10.0,
        )
            .prop_map(move |(data, lat0, lon0, dlat, dlon, t0, dt_days)| {
                let meta = GridMeta {
                    lat0,
                    lon0,
                    dlat,
                    dlon,
                    t0,
                    dt_days,
                };
                GridSeries::new(t, h, w, meta, data).unwrap()
            })
    })
}

pub fn sstgrid_round_trip(series: &GridSeries) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.sstgrid");
    save_grid_series(series, &path).unwrap();
    let back = load_grid_series(&path).unwrap();
    prop_assert_eq!(&back, series);
    Ok(())
}

pub fn split_partitions(t: usize, ratio: f64) -> Check {
    let data: Vec<f32> = (0..t * 2).map(|i| i as f32).collect();
    let series = GridSeries::new(t, 1, 2, GridMeta::default(), data).unwrap();
    let (a, b) = temporal_split(&series, ratio).unwrap();
    prop_assert_eq!(a.frames() + b.frames(), t);
    prop_assert!(a.frames() >= 1 && b.frames() >= 1);
    let joined: Vec<f32> = a.data().iter().chain(b.data()).copied().collect();
    prop_assert_eq!(joined.as_slice(), series.data());
    Ok(())
}

pub fn normalizer_round_trip(mean: f64, std: f64, x: f64) -> Check {
    let n = Normalizer { mean, std };
    let back = n.denormalize(n.normalize(x));
    prop_assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs() + mean.abs()));
    Ok(())
}

pub fn metric_properties(pred: &[f64], truth: &[f64]) -> Check {
    prop_assert_eq!(rmse(pred, truth).unwrap(), rmse(truth, pred).unwrap());
    prop_assert!(rmse(pred, truth).unwrap() >= 0.0);
    prop_assert_eq!(rmse(truth, truth).unwrap(), 0.0);
    let t: Vec<f64> = truth.iter().map(|v| v.abs() + 1.0).collect();
    prop_assert_eq!(mape(&t, &t).unwrap(), 0.0);
    prop_assert!(mape(pred, &t).unwrap() >= 0.0);
    Ok(())
}

pub fn model_output_shape(batch: usize, m: usize, l: usize, h: usize, w: usize) -> Check {
    let cfg = ModelConfig {
        d_model: 4,
        d_ff: 6,
        kernel_sizes: vec![1, 3],
        ..ModelConfig::new(m, l, h, w)
    };
    let model = Model::new(cfg).unwrap();
    let x = Array::full(&[batch, m, h, w], 0.5);
    let gates = FlowGates::uniform(batch, m, h * w, 0.1, -0.2);
    let out = model.predict(&x, &gates).unwrap();
    prop_assert_eq!(out.shape(), &[batch, l, m][..]);
    prop_assert!(out.all_finite());
    Ok(())
}

/// Periodic band-limited field, content moved by `(si, sj)` cells.
pub fn periodic_field(n: usize, si: f64, sj: f64) -> Field {
    let k = 2.0 * std::f64::consts::PI / n as f64;
    Field::from_fn(n, n, |i, j| {
        let (x, y) = (i as f64 - si, j as f64 - sj);
        (2.0 * k * x).sin() + 0.7 * (3.0 * k * y + 0.4).cos() + 0.5 * (k * (x + y)).sin()
    })
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Array {
    let len = shape.iter().product();
    Array::new(
        shape.to_vec(),
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// `R[b, τ]` via `IFFT(Q · conj(K))`, summed over channels.
pub fn fft_scores(q: &Array, k: &Array) -> Vec<f64> {
    let (b, m, d) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut out = vec![0.0; b * m];
    for bi in 0..b {
        for c in 0..d {
            let column = |x: &Array| -> Vec<Complex<f64>> {
                (0..m)
                    .map(|t| Complex::new(x.data()[(bi * m + t) * d + c], 0.0))
                    .collect()
            };
            let mut qf = column(q);
            let mut kf = column(k);
            fwd.process(&mut qf);
            fwd.process(&mut kf);
            let mut prod: Vec<Complex<f64>> =
                qf.iter().zip(&kf).map(|(a, b)| a * b.conj()).collect();
            inv.process(&mut prod);
            for tau in 0..m {
                out[bi * m + tau] += prod[tau].re / m as f64;
            }
        }
    }
    let norm = (m * d) as f64;
    out.iter().map(|v| v / norm).collect()
}
