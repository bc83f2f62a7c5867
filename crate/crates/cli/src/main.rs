mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use driftcast::flow::{estimate_flow_pyramidal, Field, FlowField};
use driftcast::grid::{
    generate_synthetic, load_grid_series, sample_windows, sample_windows_at, save_grid_series,
    subsample, temporal_split, GridSeries, WindowSample,
};
use driftcast::model::{load_checkpoint, save_checkpoint, Model};
use driftcast::phase_space::extract_forecast;
use driftcast::train::{
    evaluate, loss_curve_csv, parallel_evaluate, persistence_baseline, run_ablation, run_sweep,
    train, ExperimentConfig, Normalizer, Trained,
};
use serde::{Deserialize, Serialize};

use args::{Cli, Command, ExperimentFlags};

const MANIFEST: &str = "run.json";
const CHECKPOINT: &str = "model.dckp";

#[derive(Debug, Serialize, Deserialize)]
struct Versions {
    driftcast: String,
    sstgrid: u32,
    checkpoint: u8,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    command: String,
    args: serde_json::Value,
    seed: Option<u64>,
    /// `flag` or `DRIFTCAST_SEED`.
    seed_source: Option<String>,
    config: Option<ExperimentConfig>,
    normalizer: Option<Normalizer>,
    versions: Versions,
    outputs: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// The effective seed and where it came from.
fn resolve_seed(flag: u64) -> Result<(u64, &'static str)> {
    match std::env::var("DRIFTCAST_SEED") {
        Ok(v) => {
            let seed = v
                .trim()
                .parse()
                .with_context(|| format!("DRIFTCAST_SEED={v:?} is not an unsigned integer"))?;
            Ok((seed, "DRIFTCAST_SEED"))
        }
        Err(_) => Ok((flag, "flag")),
    }
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn start(name: &str, cli: &Cli, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let args = match serde_json::to_value(&cli.command)? {
            serde_json::Value::Object(mut m) => m.remove(name).unwrap_or_default(),
            other => other,
        };
        Ok(Run {
            out: out.to_path_buf(),
            manifest: Manifest {
                command: name.to_string(),
                args,
                seed: None,
                seed_source: None,
                config: None,
                normalizer: None,
                versions: Versions {
                    driftcast: env!("CARGO_PKG_VERSION").to_string(),
                    sstgrid: driftcast::grid::VERSION,
                    checkpoint: driftcast::model::CHECKPOINT_VERSION,
                },
                outputs: Vec::new(),
            },
        })
    }

    fn experiment(&mut self, flags: &ExperimentFlags) -> Result<ExperimentConfig> {
        let (seed, source) = resolve_seed(flags.seed)?;
        let cfg = flags.config(seed);
        self.manifest.seed = Some(seed);
        self.manifest.seed_source = Some(source.to_string());
        self.manifest.config = Some(cfg.clone());
        Ok(cfg)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn finish(self) -> Result<()> {
        let path = self.out.join(MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }
}

fn load(path: &Path) -> Result<GridSeries> {
    load_grid_series(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            let mut run = Run::start("synth", cli, &a.out)?;
            let (seed, source) = resolve_seed(a.seed)?;
            run.manifest.seed = Some(seed);
            run.manifest.seed_source = Some(source.to_string());
            let series = generate_synthetic(seed, a.t, a.h, a.w, a.kind)?;
            let path = run.path("synthetic.sstgrid");
            save_grid_series(&series, &path)?;
            println!("wrote {} ({}x{}x{})", path.display(), a.t, a.h, a.w);
            run.finish()
        }
        Command::Flow(a) => {
            let mut run = Run::start("flow", cli, &a.out)?;
            let series = load(&a.input)?;
            if a.frame + 1 >= series.frames() {
                bail!(
                    "frame {} has no successor in a series of {} frames",
                    a.frame,
                    series.frames()
                );
            }
            let (h, w) = (series.height(), series.width());
            let field = |t: usize| {
                let values = series
                    .frame(t)
                    .iter()
                    .map(|&v| if v.is_nan() { 0.0 } else { v as f64 });
                Field::new(h, w, values.collect())
            };
            let flow =
                estimate_flow_pyramidal(&field(a.frame)?, &field(a.frame + 1)?, &a.flow.params())?;
            run.write("flow.csv", flow_csv(&flow))?;
            run.write("flow_magnitude.pgm", magnitude_pgm(&flow))?;
            let (u, v) = flow.mean();
            println!("mean flow u={u:.4} v={v:.4} cells/frame");
            run.finish()
        }
        Command::Train(a) => {
            let mut run = Run::start("train", cli, &a.out)?;
            let cfg = run.experiment(&a.experiment)?;
            let series = load(&a.input)?;
            let (train_part, _) = temporal_split(&series, cfg.sampling.split_ratio)?;
            let target = cfg.target_index.unwrap_or_else(|| series.center_index());
            let samples = sample_windows(&train_part, &cfg.sampling, target)?;
            let model = Model::new(cfg.model_config(series.height(), series.width()))?;
            let trained = train(model, &samples, &cfg.flow, &cfg.train)?;
            save_checkpoint(&trained.model, run.path(CHECKPOINT))?;
            run.write("loss.csv", loss_curve_csv(&trained.loss_curve))?;
            run.manifest.normalizer = Some(trained.normalizer);
            if let (Some(first), Some(last)) =
                (trained.loss_curve.first(), trained.loss_curve.last())
            {
                println!(
                    "trained on {} windows, loss {first:.5} -> {last:.5}",
                    samples.len()
                );
            }
            run.finish()
        }
        Command::Predict(a) => {
            let mut run = Run::start("predict", cli, &a.out)?;
            let (trained, cfg) = load_trained(&a.model)?;
            run.manifest.seed = Some(cfg.seed);
            run.manifest.config = Some(cfg.clone());
            run.manifest.normalizer = Some(trained.normalizer);
            let series = load(&a.input)?;
            let sample = prediction_window(&series, &cfg, a.start)?;
            let attractor = trained.predict_attractors(std::slice::from_ref(&sample.0))?;
            let (s, truth) = &sample;
            let forecast = extract_forecast(&attractor[0], s.horizon, s.window, cfg.extract_mode);
            let mut csv = String::from("step,frame,forecast,truth\n");
            for (i, f) in forecast.iter().enumerate() {
                let t = truth.as_ref().map(|t| t[i].to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    i,
                    s.window_start + s.window - 1 + i,
                    f,
                    t
                ));
            }
            run.write("forecast.csv", csv)?;
            println!(
                "forecast {} steps from window starting at frame {}",
                forecast.len(),
                s.window_start
            );
            run.finish()
        }
        Command::Evaluate(a) => {
            let mut run = Run::start("evaluate", cli, &a.out)?;
            let (trained, cfg) = load_trained(&a.model)?;
            run.manifest.seed = Some(cfg.seed);
            run.manifest.config = Some(cfg.clone());
            run.manifest.normalizer = Some(trained.normalizer);
            let series = load(&a.input)?;
            let (_, test_part) = temporal_split(&series, cfg.sampling.split_ratio)?;
            let target = cfg.target_index.unwrap_or_else(|| series.center_index());
            let samples = sample_windows(&test_part, &cfg.sampling, target)?;
            let report = evaluate(&trained, &samples, cfg.extract_mode)?;
            let baseline = persistence_baseline(&samples)?;
            run.write("per_window.csv", report.per_window_csv())?;
            let summary = serde_json::json!({
                "rmse": report.rmse,
                "mape": report.mape,
                "persistence_rmse": baseline.rmse,
                "persistence_mape": baseline.mape,
                "windows": samples.len(),
            });
            run.write("metrics.json", serde_json::to_string_pretty(&summary)?)?;
            println!(
                "rmse {:.4} °C, mape {:.4}% (persistence {:.4} °C, {:.4}%) over {} windows",
                report.rmse,
                report.mape,
                baseline.rmse,
                baseline.mape,
                samples.len()
            );
            run.finish()
        }
        Command::Sweep(a) => {
            let mut run = Run::start("sweep", cli, &a.out)?;
            let cfg = run.experiment(&a.experiment)?;
            let series = load(&a.input)?;
            let points = match &a.values {
                Some(list) => a.axis.parse_points(list)?,
                None => a.axis.default_points(),
            };
            let table = run_sweep(&series, &points, &cfg)?;
            let wide = table.to_wide_csv();
            run.write(&format!("sweep_{}.csv", a.axis), &wide)?;
            run.write(&format!("sweep_{}_long.csv", a.axis), table.to_long_csv())?;
            print!("{wide}");
            run.finish()
        }
        Command::Ablate(a) => {
            let mut run = Run::start("ablate", cli, &a.out)?;
            let cfg = run.experiment(&a.experiment)?;
            let series = load(&a.input)?;
            let table = run_ablation(&series, &cfg, a.seeds)?;
            let csv = table.to_csv();
            run.write("ablation.csv", &csv)?;
            run.write("ablation_seeds.json", serde_json::to_string_pretty(&table)?)?;
            print!("{csv}");
            run.finish()
        }
        Command::ParallelEval(a) => {
            let mut run = Run::start("parallel-eval", cli, &a.out)?;
            let cfg = run.experiment(&a.experiment)?;
            let series = load(&a.input)?;
            let report = parallel_evaluate(&series, a.eval_span, a.window_span, &cfg)?;
            run.write("parallel.csv", report.to_csv())?;
            println!(
                "{} windows: rmse {:.4} °C, mape {:.4}% (persistence {:.4} °C)",
                report.windows.len(),
                report.rmse,
                report.mape,
                report.baseline_rmse
            );
            run.finish()
        }
    }
}

fn load_trained(dir: &Path) -> Result<(Trained, ExperimentConfig)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.command != "train" {
        bail!(
            "{} was written by `{}`, not `train`",
            path.display(),
            manifest.command
        );
    }
    let (Some(cfg), Some(normalizer)) = (manifest.config, manifest.normalizer) else {
        bail!("{} lacks the training configuration", path.display());
    };
    let model = load_checkpoint(dir.join(CHECKPOINT))?;
    let trained = Trained {
        model,
        normalizer,
        flow: cfg.flow.clone(),
        loss_curve: Vec::new(),
    };
    Ok((trained, cfg))
}

/// The window to forecast from, with its truth when the series covers the
/// whole horizon.
fn prediction_window(
    series: &GridSeries,
    cfg: &ExperimentConfig,
    start: Option<usize>,
) -> Result<(WindowSample, Option<Vec<f64>>)> {
    let sampling = &cfg.sampling;
    let sub = subsample(series, sampling.delta_t)?;
    let m = sampling.window;
    if sub.frames() < m {
        bail!("{} frames cannot fill a window of {}", sub.frames(), m);
    }
    let start = start.unwrap_or(sub.frames() - m);
    if start + m > sub.frames() {
        bail!(
            "window at {start} runs past the {} available frames",
            sub.frames()
        );
    }
    let target = cfg.target_index.unwrap_or_else(|| series.center_index());
    if start + sampling.span() <= sub.frames() {
        if let Some(s) = sample_windows_at(series, sampling, target, &[start])?.pop() {
            let truth = s.forecast_truth();
            return Ok((s, Some(truth)));
        }
    }
    let mut input_frames = Vec::with_capacity(m * sub.cells());
    for t in start..start + m {
        input_frames.extend(
            sub.frame(t)
                .iter()
                .map(|&v| if v.is_nan() { 0.0 } else { v as f64 }),
        );
    }
    let sample = WindowSample {
        input_frames,
        height: sub.height(),
        width: sub.width(),
        target_index: target,
        delay_target: vec![0.0; sampling.horizon * m],
        window_start: start,
        window: m,
        horizon: sampling.horizon,
    };
    Ok((sample, None))
}

fn flow_csv(flow: &FlowField) -> String {
    let mut out = String::from("row,col,u,v\n");
    for i in 0..flow.h {
        for j in 0..flow.w {
            let k = i * flow.w + j;
            out.push_str(&format!("{},{},{},{}\n", i, j, flow.u[k], flow.v[k]));
        }
    }
    out
}

/// Plain (ASCII) PGM scaled so the largest magnitude maps to 255.
fn magnitude_pgm(flow: &FlowField) -> String {
    let mag = flow.magnitude();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P2\n{} {}\n255\n", flow.w, flow.h);
    for row in mag.chunks(flow.w) {
        let line: Vec<String> = row
            .iter()
            .map(|m| {
                let level = if max > 0.0 {
                    (m / max * 255.0).round()
                } else {
                    0.0
                };
                (level as u8).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
