use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use driftcast::flow::FlowParams;
use driftcast::grid::{SamplingConfig, SynthKind};
use driftcast::model::Components;
use driftcast::phase_space::ExtractMode;
use driftcast::train::{ExperimentConfig, ModelHyper, SweepAxis, TrainConfig};
use serde::Serialize;

/// Optical-flow-guided phase-space forecasting of gridded sea surface temperature.
#[derive(Debug, Parser, Serialize)]
#[command(name = "driftcast", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic field with known motion.
    Synth(SynthArgs),
    /// Estimate the flow between two consecutive frames.
    Flow(FlowArgs),
    /// Train on the first part of a series and save a checkpoint.
    Train(TrainArgs),
    /// Forecast one window with a trained model.
    Predict(PredictArgs),
    /// Score a trained model on the held-out part of a series.
    Evaluate(EvaluateArgs),
    /// Train and evaluate once per value of one experimental axis.
    Sweep(SweepArgs),
    /// Component ablation over several seeds.
    Ablate(AblateArgs),
    /// Spatially parallel sliding-window evaluation.
    ParallelEval(ParallelArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// advecting_wave, eddy or seasonal.
    #[arg(long, default_value = "advecting_wave")]
    pub kind: SynthKind,
    /// Number of frames.
    #[arg(long = "T", default_value_t = 240)]
    pub t: usize,
    /// Grid rows.
    #[arg(long = "H", default_value_t = 8)]
    pub h: usize,
    /// Grid columns.
    #[arg(long = "W", default_value_t = 8)]
    pub w: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives synthetic.sstgrid.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Flow is estimated from this frame to the next.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[command(flatten)]
    pub flow: FlowFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// First input frame of the window (after subsampling); defaults to the
    /// last complete window of the series.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// area, delta_t, horizon or season.
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated values; defaults to the columns of the published table
    /// for the axis (area 1,2,4; delta_t 1,3,5; horizon 15,30,45; all seasons).
    #[arg(long)]
    pub values: Option<String>,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Seeds per configuration; each row reports the median.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ParallelArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Side of the central region whose grid points are evaluated, degrees.
    #[arg(long, default_value_t = 1.0)]
    pub eval_span: f64,
    /// Side of the box trained around each point, degrees.
    #[arg(long, default_value_t = 2.0)]
    pub window_span: f64,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplingFlags {
    /// Input length M.
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    /// Forecast horizon L.
    #[arg(long, default_value_t = 30)]
    pub horizon: usize,
    /// Stride between adjacent windows.
    #[arg(long, default_value_t = 5)]
    pub t_gap: usize,
    /// Subsampling stride over time.
    #[arg(long, default_value_t = 1)]
    pub delta_t: usize,
    /// Fraction of frames used for training.
    #[arg(long, default_value_t = 0.5)]
    pub split_ratio: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlowFlags {
    #[arg(long, default_value_t = 4)]
    pub pyramid_levels: usize,
    /// Half-width of the fitting neighbourhood, cells.
    #[arg(long, default_value_t = 5)]
    pub window_radius: usize,
    #[arg(long, default_value_t = 1.5)]
    pub gaussian_sigma: f64,
    /// Smoothness weight, relative to unit-variance intensities.
    #[arg(long, default_value_t = 0.15)]
    pub smoothness_lambda: f64,
    /// Refinement iterations per pyramid level.
    #[arg(long, default_value_t = 3)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    pub post_smoothing_sigma: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelFlags {
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 256)]
    pub d_ff: usize,
    /// Inception branch kernel sizes (odd).
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5])]
    pub kernel_sizes: Vec<usize>,
    /// Lags kept by the auto-correlation block; defaults to ceil(ln M).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Drop the flow gating.
    #[arg(long)]
    pub no_optical_attention: bool,
    /// Drop the multi-scale convolution block.
    #[arg(long)]
    pub no_inception: bool,
    /// Drop the auto-correlation block.
    #[arg(long)]
    pub no_autocorrelation: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainFlags {
    #[arg(long, alias = "batch", default_value_t = 30)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 220)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    /// Train on raw values instead of z-scores.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentFlags {
    #[command(flatten)]
    pub sampling: SamplingFlags,
    #[command(flatten)]
    pub flow: FlowFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    /// How a forecast is read from the predicted attractor: last or antidiag.
    #[arg(long, default_value = "last")]
    pub extract_mode: ExtractMode,
    /// Flattened target cell; defaults to the grid center.
    #[arg(long)]
    pub target_index: Option<usize>,
    /// Overridden by DRIFTCAST_SEED when that is set.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FlowFlags {
    pub fn params(&self) -> FlowParams {
        FlowParams {
            pyramid_levels: self.pyramid_levels,
            window_radius: self.window_radius,
            gaussian_sigma: self.gaussian_sigma,
            smoothness_lambda: self.smoothness_lambda,
            iterations: self.iterations,
            post_smoothing_sigma: self.post_smoothing_sigma,
        }
    }
}

impl ExperimentFlags {
    pub fn config(&self, seed: u64) -> ExperimentConfig {
        let s = &self.sampling;
        let m = &self.model;
        let t = &self.train;
        ExperimentConfig {
            sampling: SamplingConfig {
                window: s.window,
                horizon: s.horizon,
                t_gap: s.t_gap,
                delta_t: s.delta_t,
                split_ratio: s.split_ratio,
            },
            flow: self.flow.params(),
            model: ModelHyper {
                d_model: m.d_model,
                d_ff: m.d_ff,
                kernel_sizes: m.kernel_sizes.clone(),
                top_k: m.top_k,
                components: Components {
                    optical_attention: !m.no_optical_attention,
                    inception: !m.no_inception,
                    autocorrelation: !m.no_autocorrelation,
                },
            },
            train: TrainConfig {
                batch_size: t.batch_size,
                epochs: t.epochs,
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                seed,
                normalize: !t.no_normalize,
            },
            extract_mode: self.extract_mode,
            seed,
            target_index: self.target_index,
        }
    }
}
