//! Training, evaluation and the experiment harnesses built on them.

mod experiment;
mod metrics;

pub use experiment::{
    median, parallel_evaluate, run_ablation, run_pipeline, run_sweep, AblationRow, AblationTable,
    ExperimentConfig, GridWindowResult, ModelHyper, ParallelReport, RunResult, Season, SweepAxis,
    SweepPoint, SweepRow, SweepTable,
};
pub use metrics::{
    evaluate, evaluate_forecasts, loss_curve_csv, mape, persistence_baseline, rmse, EvalReport,
    WindowMetrics,
};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow_pyramidal, Field, FlowField, FlowParams, FlowSequence};
use crate::grid::WindowSample;
use crate::model::{forward, FlowGates, Model, ModelParams};
use crate::tensor::{Array, Graph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// z-score inputs and targets with training-split statistics.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 30,
            epochs: 220,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            normalize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        // Zero is accepted so a run can be replayed without updates.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decays must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Affine map between °C and the units the network is trained in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mean: 0.0,
            std: 1.0,
        }
    }

    /// Mean and standard deviation over every input cell of `samples`.
    pub fn fit(samples: &[WindowSample]) -> Self {
        let n: usize = samples.iter().map(|s| s.input_frames.len()).sum();
        if n == 0 {
            return Self::identity();
        }
        let values = || samples.iter().flat_map(|s| s.input_frames.iter());
        let mean = values().sum::<f64>() / n as f64;
        let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        Normalizer {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// `mean((pred - target)²)` over all entries of equal-shape arrays.
pub fn mse_loss(pred: &Array, target: &Array) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::shape("mse_loss", "empty input"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> Self {
        Adam {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: 1e-8,
            step: 0,
            m: params.iter().map(|a| vec![0.0; a.len()]).collect(),
            v: params.iter().map(|a| vec![0.0; a.len()]).collect(),
        }
    }

    /// One update; tensors without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Option<Vec<f64>>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[k] else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *x -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
            }
        }
    }
}

/// Flows for each sample's input window. Pairwise flows are shared between
/// overlapping windows, keyed by absolute frame index, so all samples must be
/// cut from the same series.
pub fn compute_flows(samples: &[WindowSample], params: &FlowParams) -> Result<Vec<FlowSequence>> {
    let mut cache: HashMap<usize, FlowField> = HashMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let (h, w) = (s.height, s.width);
        let mut pairs = Vec::with_capacity(s.window.saturating_sub(1));
        for m in 0..s.window.saturating_sub(1) {
            let key = s.window_start + m;
            if let Some(f) = cache.get(&key) {
                pairs.push(f.clone());
                continue;
            }
            let f1 = Field::new(h, w, s.frame(m).to_vec())?;
            let f2 = Field::new(h, w, s.frame(m + 1).to_vec())?;
            let flow = estimate_flow_pyramidal(&f1, &f2, params)?;
            cache.insert(key, flow.clone());
            pairs.push(flow);
        }
        out.push(FlowSequence::from_pairs(pairs)?);
    }
    Ok(out)
}

/// A sample converted to network units with its flows attached.
#[derive(Debug, Clone)]
struct Prepared {
    x: Vec<f64>,
    target: Vec<f64>,
    flows: FlowSequence,
}

fn prepare(samples: &[WindowSample], flows: Vec<FlowSequence>, norm: &Normalizer) -> Vec<Prepared> {
    samples
        .iter()
        .zip(flows)
        .map(|(s, flows)| Prepared {
            x: s.input_frames.iter().map(|&v| norm.normalize(v)).collect(),
            target: s.delay_target.iter().map(|&v| norm.normalize(v)).collect(),
            flows,
        })
        .collect()
}

fn check_samples(model: &Model, samples: &[WindowSample]) -> Result<()> {
    let c = &model.config;
    for s in samples {
        if s.window != c.window
            || s.horizon != c.horizon
            || s.height != c.height
            || s.width != c.width
        {
            return Err(Error::shape(
                "train",
                format!(
                    "sample M={} L={} {}x{} vs model M={} L={} {}x{}",
                    s.window, s.horizon, s.height, s.width, c.window, c.horizon, c.height, c.width
                ),
            ));
        }
    }
    Ok(())
}

fn stack(model: &Model, batch: &[&Prepared]) -> Result<(Array, Array, FlowGates)> {
    let c = &model.config;
    let b = batch.len();
    let x = Array::new(
        vec![b, c.window, c.height, c.width],
        batch.iter().flat_map(|p| p.x.iter().copied()).collect(),
    )?;
    let t = Array::new(
        vec![b, c.horizon, c.window],
        batch
            .iter()
            .flat_map(|p| p.target.iter().copied())
            .collect(),
    )?;
    let seqs: Vec<&FlowSequence> = batch.iter().map(|p| &p.flows).collect();
    let gates = FlowGates::from_sequences(&seqs, c.window, c.cells())?;
    Ok((x, t, gates))
}

/// A trained network with everything needed to forecast in °C.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub normalizer: Normalizer,
    pub flow: FlowParams,
    pub loss_curve: Vec<f64>,
}

impl Trained {
    /// Predicted `L × M` delay attractors in °C, one per sample.
    pub fn predict_attractors(&self, samples: &[WindowSample]) -> Result<Vec<Vec<f64>>> {
        check_samples(&self.model, samples)?;
        let flows = compute_flows(samples, &self.flow)?;
        let prepared = prepare(samples, flows, &self.normalizer);
        let mut out = Vec::with_capacity(samples.len());
        for chunk in prepared.chunks(32) {
            let refs: Vec<&Prepared> = chunk.iter().collect();
            let (x, _, gates) = stack(&self.model, &refs)?;
            let pred = self.model.predict(&x, &gates)?;
            let per = self.model.config.horizon * self.model.config.window;
            for d in pred.data().chunks(per) {
                out.push(d.iter().map(|&z| self.normalizer.denormalize(z)).collect());
            }
        }
        Ok(out)
    }
}

/// Fits `model` to `samples` with mini-batch Adam on the delay-attractor MSE.
///
/// `loss_curve[e]` is the sample-weighted mean batch loss of epoch `e`, in
/// normalized units.
pub fn train(
    model: Model,
    samples: &[WindowSample],
    flow: &FlowParams,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Range("no training samples".into()));
    }
    check_samples(&model, samples)?;
    let normalizer = if cfg.normalize {
        Normalizer::fit(samples)
    } else {
        Normalizer::identity()
    };
    let flows = compute_flows(samples, flow)?;
    let prepared = prepare(samples, flows, &normalizer);

    let mut model = model;
    let mut adam = Adam::new(&model.params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (x, t, gates) = stack(&model, &batch)?;
            let mut g = Graph::new();
            let p = model.params.to_graph(&mut g);
            let xt = g.constant(x);
            let tt = g.constant(t);
            let out = forward(&mut g, &model.config, &p, xt, &gates)?;
            let loss = g.mse(out, tt)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            total += value * chunk.len() as f64;
            g.backward(loss)?;
            let grads: Vec<Option<Vec<f64>>> =
                p.iter().map(|t| g.grad(*t).map(<[f64]>::to_vec)).collect();
            adam.step(&mut model.params, &grads);
        }
        let epoch_loss = total / prepared.len() as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        loss_curve.push(epoch_loss);
    }
    if !model.params.iter().all(Array::all_finite) {
        return Err(Error::Divergence {
            epoch: cfg.epochs - 1,
            loss: f64::NAN,
        });
    }
    Ok(Trained {
        model,
        normalizer,
        flow: flow.clone(),
        loss_curve,
    })
}
