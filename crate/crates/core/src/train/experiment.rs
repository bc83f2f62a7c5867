use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, persistence_baseline, train, EvalReport, TrainConfig, Trained};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::grid::{
    extract_region, grid_center, sample_windows, subsample, temporal_split, GridSeries,
    SamplingConfig, WindowSample,
};
use crate::model::{default_top_k, Components, Model, ModelConfig};
use crate::phase_space::ExtractMode;

/// Architecture settings that do not depend on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHyper {
    pub d_model: usize,
    pub d_ff: usize,
    pub kernel_sizes: Vec<usize>,
    /// `None` selects `⌈ln M⌉`.
    pub top_k: Option<usize>,
    pub components: Components,
}

impl Default for ModelHyper {
    fn default() -> Self {
        ModelHyper {
            d_model: 128,
            d_ff: 256,
            kernel_sizes: vec![1, 3, 5],
            top_k: None,
            components: Components::default(),
        }
    }
}

/// Everything one train-and-evaluate run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentConfig {
    pub sampling: SamplingConfig,
    pub flow: FlowParams,
    pub model: ModelHyper,
    pub train: TrainConfig,
    pub extract_mode: ExtractMode,
    /// Seeds both parameter initialization and batch shuffling.
    pub seed: u64,
    /// Flattened target cell; `None` selects the grid center.
    pub target_index: Option<usize>,
}

impl ExperimentConfig {
    pub fn model_config(&self, height: usize, width: usize) -> ModelConfig {
        let m = self.sampling.window;
        ModelConfig {
            window: m,
            horizon: self.sampling.horizon,
            height,
            width,
            d_model: self.model.d_model,
            d_ff: self.model.d_ff,
            kernel_sizes: self.model.kernel_sizes.clone(),
            top_k: self.model.top_k.unwrap_or_else(|| default_top_k(m)),
            seed: self.seed,
            components: self.model.components,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ExperimentConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trained: Trained,
    pub report: EvalReport,
    pub baseline: EvalReport,
    pub train_windows: usize,
}

/// Split, sample, train on the first part and evaluate on the second.
pub fn run_pipeline(series: &GridSeries, cfg: &ExperimentConfig) -> Result<RunResult> {
    run_filtered(series, cfg, |_| true)
}

fn run_filtered(
    series: &GridSeries,
    cfg: &ExperimentConfig,
    keep_test: impl Fn(&WindowSample) -> bool,
) -> Result<RunResult> {
    cfg.sampling.validate()?;
    let target = cfg.target_index.unwrap_or_else(|| series.center_index());
    let (train_part, test_part) = temporal_split(series, cfg.sampling.split_ratio)?;
    let train_samples = sample_windows(&train_part, &cfg.sampling, target)?;
    let test_samples: Vec<WindowSample> = sample_windows(&test_part, &cfg.sampling, target)?
        .into_iter()
        .filter(|s| keep_test(s))
        .collect();
    if train_samples.is_empty() {
        return Err(Error::Range("no valid training windows".into()));
    }
    if test_samples.is_empty() {
        return Err(Error::Range("no valid test windows".into()));
    }
    let model = Model::new(cfg.model_config(series.height(), series.width()))?;
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let trained = train(model, &train_samples, &cfg.flow, &train_cfg)?;
    let report = evaluate(&trained, &test_samples, cfg.extract_mode)?;
    let baseline = persistence_baseline(&test_samples)?;
    Ok(RunResult {
        trained,
        report,
        baseline,
        train_windows: train_samples.len(),
    })
}

/// One sliding window of [`parallel_evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWindowResult {
    /// Grid cell the window is centered on.
    pub row: usize,
    pub col: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mape: f64,
    pub baseline_rmse: f64,
    pub baseline_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelReport {
    /// Arithmetic means of the per-window metrics.
    pub rmse: f64,
    pub mape: f64,
    pub baseline_rmse: f64,
    pub baseline_mape: f64,
    pub windows: Vec<GridWindowResult>,
}

impl ParallelReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,seed,rmse,mape,baseline_rmse,baseline_mape\n");
        for w in &self.windows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                w.row, w.col, w.seed, w.rmse, w.mape, w.baseline_rmse, w.baseline_mape
            ));
        }
        out.push_str(&format!(
            "mean,mean,,{},{},{},{}\n",
            self.rmse, self.mape, self.baseline_rmse, self.baseline_mape
        ));
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

/// Slides a `window_span` box over every grid point of the central
/// `eval_span` region, runs the full pipeline with that point as target and
/// averages the metrics. Window `i` (row-major over the region) uses seed
/// `cfg.seed + i`, so the result does not depend on execution order.
pub fn parallel_evaluate(
    series: &GridSeries,
    eval_span: f64,
    window_span: f64,
    cfg: &ExperimentConfig,
) -> Result<ParallelReport> {
    let (eh, ew) = series.cells_for_span(eval_span);
    let (wh, ww) = series.cells_for_span(window_span);
    if eh == 0 || ew == 0 || wh == 0 || ww == 0 {
        return Err(Error::Range(format!(
            "spans {eval_span}° / {window_span}° are smaller than one cell"
        )));
    }
    let (h, w) = (series.height(), series.width());
    let r0 = (h / 2).checked_sub(eh / 2);
    let c0 = (w / 2).checked_sub(ew / 2);
    let (Some(r0), Some(c0)) = (r0, c0) else {
        return Err(Error::Range("evaluation region exceeds the grid".into()));
    };
    let mut jobs = Vec::with_capacity(eh * ew);
    for r in r0..r0 + eh {
        for c in c0..c0 + ew {
            let fits = r >= wh / 2 && c >= ww / 2 && r - wh / 2 + wh <= h && c - ww / 2 + ww <= w;
            if !fits {
                return Err(Error::Range(format!(
                    "a {wh}x{ww} window centered on ({r}, {c}) leaves the {h}x{w} grid"
                )));
            }
            jobs.push((jobs.len(), r, c));
        }
    }
    let windows = jobs
        .par_iter()
        .map(|&(i, r, c)| {
            let sub = series.extract_cells(r - wh / 2, c - ww / 2, wh, ww)?;
            let seed = cfg.seed + i as u64;
            let run_cfg = ExperimentConfig {
                seed,
                target_index: Some((wh / 2) * ww + ww / 2),
                ..cfg.clone()
            };
            let run = run_pipeline(&sub, &run_cfg)?;
            Ok(GridWindowResult {
                row: r,
                col: c,
                seed,
                rmse: run.report.rmse,
                mape: run.report.mape,
                baseline_rmse: run.baseline.rmse,
                baseline_mape: run.baseline.mape,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParallelReport {
        rmse: mean(windows.iter().map(|w| w.rmse)),
        mape: mean(windows.iter().map(|w| w.mape)),
        baseline_rmse: mean(windows.iter().map(|w| w.baseline_rmse)),
        baseline_mape: mean(windows.iter().map(|w| w.baseline_mape)),
        windows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [
        Season::Spring,
        Season::Summer,
        Season::Autumn,
        Season::Winter,
    ];

    /// Zero-based day of year on which the season starts.
    pub fn start_day(self) -> u32 {
        match self {
            Season::Spring => 80,
            Season::Summer => 172,
            Season::Autumn => 266,
            Season::Winter => 355,
        }
    }

    fn next(self) -> Season {
        match self {
            Season::Spring => Season::Summer,
            Season::Summer => Season::Autumn,
            Season::Autumn => Season::Winter,
            Season::Winter => Season::Spring,
        }
    }

    /// Whether zero-based day of year `doy` falls in `[start, next start)`.
    pub fn contains(self, doy: u32) -> bool {
        let (a, b) = (self.start_day(), self.next().start_day());
        if a < b {
            doy >= a && doy < b
        } else {
            doy >= a || doy < b
        }
    }

    pub fn of_day(doy: u32) -> Season {
        Season::ALL
            .into_iter()
            .find(|s| s.contains(doy))
            .expect("the seasons cover the year")
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Autumn => "Autumn",
            Season::Winter => "Winter",
        })
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spring" => Ok(Season::Spring),
            "summer" => Ok(Season::Summer),
            "autumn" | "fall" => Ok(Season::Autumn),
            "winter" => Ok(Season::Winter),
            other => Err(Error::Config(format!("unknown season '{other}'"))),
        }
    }
}

/// Zero-based day of year of a day count since 1970-01-01.
pub(crate) fn day_of_year(epoch_days: f64) -> Result<u32> {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    let days = epoch_days.floor();
    if !(0.0..1e7).contains(&days) {
        return Err(Error::Range(format!("epoch day {epoch_days} out of range")));
    }
    epoch
        .checked_add_days(Days::new(days as u64))
        .map(|d| d.ordinal0())
        .ok_or_else(|| Error::Range(format!("epoch day {epoch_days} out of range")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Area,
    DeltaT,
    Horizon,
    Season,
}

impl SweepAxis {
    /// The columns of the corresponding results table.
    pub fn default_points(self) -> Vec<SweepPoint> {
        match self {
            SweepAxis::Area => [1.0, 2.0, 4.0].map(SweepPoint::Area).to_vec(),
            SweepAxis::DeltaT => [1, 3, 5].map(SweepPoint::DeltaT).to_vec(),
            SweepAxis::Horizon => [15, 30, 45].map(SweepPoint::Horizon).to_vec(),
            SweepAxis::Season => Season::ALL.map(SweepPoint::Season).to_vec(),
        }
    }

    /// Parses a comma-separated list of values for this axis.
    pub fn parse_points(self, list: &str) -> Result<Vec<SweepPoint>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|v| {
                let bad = |_| Error::Config(format!("bad {self} value '{v}'"));
                Ok(match self {
                    SweepAxis::Area => SweepPoint::Area(
                        v.parse()
                            .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                    ),
                    SweepAxis::DeltaT => SweepPoint::DeltaT(
                        v.parse()
                            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    ),
                    SweepAxis::Horizon => SweepPoint::Horizon(
                        v.parse()
                            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    ),
                    SweepAxis::Season => SweepPoint::Season(v.parse()?),
                })
            })
            .collect()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Area => "area",
            SweepAxis::DeltaT => "delta_t",
            SweepAxis::Horizon => "horizon",
            SweepAxis::Season => "season",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area" => Ok(SweepAxis::Area),
            "delta_t" | "delta-t" | "dt" => Ok(SweepAxis::DeltaT),
            "horizon" => Ok(SweepAxis::Horizon),
            "season" => Ok(SweepAxis::Season),
            other => Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// One column of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepPoint {
    /// Square region side in degrees, centered on the grid.
    Area(f64),
    DeltaT(usize),
    Horizon(usize),
    /// Test windows whose first frame falls in this season.
    Season(Season),
}

impl SweepPoint {
    pub fn axis(&self) -> SweepAxis {
        match self {
            SweepPoint::Area(_) => SweepAxis::Area,
            SweepPoint::DeltaT(_) => SweepAxis::DeltaT,
            SweepPoint::Horizon(_) => SweepAxis::Horizon,
            SweepPoint::Season(_) => SweepAxis::Season,
        }
    }

    /// Column heading as printed in the results tables.
    pub fn label(&self) -> String {
        match self {
            SweepPoint::Area(s) => format!("{s}°×{s}°"),
            SweepPoint::DeltaT(d) => format!("Δt = {d}"),
            SweepPoint::Horizon(l) => format!("L = {l}"),
            SweepPoint::Season(s) => s.to_string(),
        }
    }

    fn value(&self) -> String {
        match self {
            SweepPoint::Area(s) => s.to_string(),
            SweepPoint::DeltaT(d) => d.to_string(),
            SweepPoint::Horizon(l) => l.to_string(),
            SweepPoint::Season(s) => s.to_string().to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Grid cells `N` of the region the row was trained on.
    pub cells: usize,
    pub report: EvalReport,
    pub baseline: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub config: ExperimentConfig,
}

impl SweepTable {
    /// One line per (value, model) with the pinned configuration alongside.
    pub fn to_long_csv(&self) -> String {
        let c = &self.config;
        let mut out = String::from(
            "axis,value,model,rmse,mape,cells,window,horizon,delta_t,t_gap,split_ratio,\
             d_model,d_ff,epochs,batch_size,learning_rate,seed\n",
        );
        for row in &self.rows {
            let mut sampling = c.sampling.clone();
            match row.point {
                SweepPoint::DeltaT(d) => sampling.delta_t = d,
                SweepPoint::Horizon(l) => sampling.horizon = l,
                _ => {}
            }
            for (model, r) in [("OptFormer", &row.report), ("Persistence", &row.baseline)] {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    self.axis,
                    row.point.value(),
                    model,
                    r.rmse,
                    r.mape,
                    row.cells,
                    sampling.window,
                    sampling.horizon,
                    sampling.delta_t,
                    sampling.t_gap,
                    sampling.split_ratio,
                    c.model.d_model,
                    c.model.d_ff,
                    c.train.epochs,
                    c.train.batch_size,
                    c.train.learning_rate,
                    c.seed
                ));
            }
        }
        out
    }

    /// The layout of the published tables: one row per model, an RMSE and a
    /// MAPE column per swept value.
    pub fn to_wide_csv(&self) -> String {
        let mut out = String::from("Model");
        for row in &self.rows {
            let l = row.point.label();
            out.push_str(&format!(",{l} RMSE,{l} MAPE"));
        }
        out.push('\n');
        for (model, pick) in [
            (
                "OptFormer",
                (|r: &SweepRow| &r.report) as fn(&SweepRow) -> &EvalReport,
            ),
            ("Persistence", |r: &SweepRow| &r.baseline),
        ] {
            out.push_str(model);
            for row in &self.rows {
                let r = pick(row);
                out.push_str(&format!(",{:.4},{:.4}", r.rmse, r.mape));
            }
            out.push('\n');
        }
        out
    }
}

fn sweep_row(series: &GridSeries, point: SweepPoint, base: &ExperimentConfig) -> Result<SweepRow> {
    let mut cfg = base.clone();
    match point {
        SweepPoint::Area(span) => {
            let (lat, lon) = grid_center(series);
            let region = extract_region(series, lat, lon, span)?;
            cfg.target_index = None;
            let run = run_pipeline(&region, &cfg)?;
            return Ok(SweepRow {
                point,
                cells: region.cells(),
                report: run.report,
                baseline: run.baseline,
            });
        }
        SweepPoint::DeltaT(d) => cfg.sampling.delta_t = d,
        SweepPoint::Horizon(l) => cfg.sampling.horizon = l,
        SweepPoint::Season(season) => {
            let (_, test) = temporal_split(series, cfg.sampling.split_ratio)?;
            let sub = subsample(&test, cfg.sampling.delta_t)?;
            let run = run_filtered(series, &cfg, |s| {
                day_of_year(sub.epoch_day(s.window_start))
                    .map(|d| season.contains(d))
                    .unwrap_or(false)
            })
            .map_err(|e| match e {
                Error::Range(msg) => Error::Range(format!("{season}: {msg}")),
                other => other,
            })?;
            return Ok(SweepRow {
                point,
                cells: series.cells(),
                report: run.report,
                baseline: run.baseline,
            });
        }
    }
    let run = run_pipeline(series, &cfg)?;
    Ok(SweepRow {
        point,
        cells: series.cells(),
        report: run.report,
        baseline: run.baseline,
    })
}

/// One full run per point; every non-swept setting stays at `base`.
pub fn run_sweep(
    series: &GridSeries,
    points: &[SweepPoint],
    base: &ExperimentConfig,
) -> Result<SweepTable> {
    let Some(first) = points.first() else {
        return Err(Error::Config("sweep needs at least one value".into()));
    };
    let axis = first.axis();
    if points.iter().any(|p| p.axis() != axis) {
        return Err(Error::Config("sweep values must share one axis".into()));
    }
    let rows = points
        .par_iter()
        .map(|&p| sweep_row(series, p, base))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axis,
        rows,
        config: base.clone(),
    })
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub components: Components,
    pub rmse: f64,
    pub mape: f64,
    pub seed_rmse: Vec<f64>,
    pub seed_mape: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Rows in the order full, without optical attention, without
    /// inception, without auto-correlation.
    pub fn to_csv(&self) -> String {
        let mark = |on: bool| if on { "✓" } else { "×" };
        let mut out = String::from("Optical_Attention,Inception,AutoCorrelation,RMSE,MAPE\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4}\n",
                mark(r.components.optical_attention),
                mark(r.components.inception),
                mark(r.components.autocorrelation),
                r.rmse,
                r.mape
            ));
        }
        out
    }

    pub fn full(&self) -> &AblationRow {
        &self.rows[0]
    }
}

/// The four component configurations of the ablation table.
pub fn ablation_configs() -> [Components; 4] {
    let full = Components::default();
    [
        full,
        Components {
            optical_attention: false,
            ..full
        },
        Components {
            inception: false,
            ..full
        },
        Components {
            autocorrelation: false,
            ..full
        },
    ]
}

/// Median metrics over `seeds` runs (seeds `base.seed ..`) for each of the
/// four configurations.
pub fn run_ablation(
    series: &GridSeries,
    base: &ExperimentConfig,
    seeds: usize,
) -> Result<AblationTable> {
    if seeds == 0 {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..4)
        .flat_map(|c| (0..seeds as u64).map(move |s| (c, s)))
        .collect();
    let configs = ablation_configs();
    let results = jobs
        .par_iter()
        .map(|&(c, s)| {
            let mut cfg = base.with_seed(base.seed + s);
            cfg.model.components = configs[c];
            run_pipeline(series, &cfg).map(|r| (r.report.rmse, r.report.mape))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = configs
        .iter()
        .enumerate()
        .map(|(c, comp)| {
            let mine = &results[c * seeds..(c + 1) * seeds];
            let seed_rmse: Vec<f64> = mine.iter().map(|r| r.0).collect();
            let seed_mape: Vec<f64> = mine.iter().map(|r| r.1).collect();
            AblationRow {
                components: *comp,
                rmse: median(&seed_rmse),
                mape: median(&seed_mape),
                seed_rmse,
                seed_mape,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_synthetic, SynthKind};

    fn quick() -> ExperimentConfig {
        ExperimentConfig {
            sampling: SamplingConfig {
                window: 6,
                horizon: 4,
                t_gap: 3,
                ..SamplingConfig::default()
            },
            model: ModelHyper {
                d_model: 8,
                d_ff: 16,
                ..ModelHyper::default()
            },
            train: TrainConfig {
                epochs: 3,
                batch_size: 8,
                ..TrainConfig::default()
            },
            seed: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn season_boundaries() {
        assert_eq!(Season::of_day(0), Season::Winter);
        assert_eq!(Season::of_day(79), Season::Winter);
        assert_eq!(Season::of_day(80), Season::Spring);
        assert_eq!(Season::of_day(171), Season::Spring);
        assert_eq!(Season::of_day(172), Season::Summer);
        assert_eq!(Season::of_day(266), Season::Autumn);
        assert_eq!(Season::of_day(355), Season::Winter);
        assert_eq!(Season::of_day(365), Season::Winter);
    }

    #[test]
    fn day_of_year_from_epoch_days() {
        // 2020-01-01 is day 18262 since the epoch.
        assert_eq!(day_of_year(18262.0).unwrap(), 0);
        assert_eq!(day_of_year(18262.0 + 80.0).unwrap(), 80);
        assert_eq!(day_of_year(18262.0 + 366.0).unwrap(), 0);
        assert!(day_of_year(-1.0).is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn parse_axis_values() {
        let pts = SweepAxis::Area.parse_points("1, 2,4").unwrap();
        assert_eq!(pts, SweepAxis::Area.default_points());
        assert_eq!(
            SweepAxis::Season.parse_points("spring,winter").unwrap(),
            vec![
                SweepPoint::Season(Season::Spring),
                SweepPoint::Season(Season::Winter)
            ]
        );
        assert!(SweepAxis::Horizon.parse_points("x").is_err());
        assert!("bogus".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn labels_follow_table_headings() {
        let labels: Vec<String> = SweepAxis::Area
            .default_points()
            .iter()
            .map(|p| p.label())
            .collect();
        assert_eq!(labels, ["1°×1°", "2°×2°", "4°×4°"]);
        assert_eq!(SweepPoint::DeltaT(3).label(), "Δt = 3");
        assert_eq!(SweepPoint::Horizon(45).label(), "L = 45");
        assert_eq!(SweepPoint::Season(Season::Autumn).label(), "Autumn");
    }

    #[test]
    fn pipeline_runs_and_reports_in_degrees() {
        let series = generate_synthetic(1, 60, 4, 4, SynthKind::AdvectingWave).unwrap();
        let run = run_pipeline(&series, &quick()).unwrap();
        assert_eq!(run.report.loss_curve.len(), 3);
        assert!(run.report.rmse.is_finite() && run.report.rmse >= 0.0);
        assert!(run.baseline.rmse > 0.0);
        assert!(run.train_windows > 0);
    }

    #[test]
    fn single_point_parallel_eval_equals_one_pipeline() {
        let series = generate_synthetic(2, 60, 8, 8, SynthKind::AdvectingWave).unwrap();
        let cfg = quick();
        let par = parallel_evaluate(&series, 0.25, 2.0, &cfg).unwrap();
        assert_eq!(par.windows.len(), 1);
        assert_eq!((par.windows[0].row, par.windows[0].col), (4, 4));
        let single = run_pipeline(&series, &cfg).unwrap();
        assert_eq!(par.rmse, single.report.rmse);
        assert_eq!(par.mape, single.report.mape);
    }

    #[test]
    fn parallel_eval_averages_windows() {
        let mut series = generate_synthetic(2, 60, 6, 6, SynthKind::Eddy).unwrap();
        series.dlat = 0.5;
        series.dlon = 0.5;
        let par = parallel_evaluate(&series, 1.0, 2.0, &quick()).unwrap();
        assert_eq!(par.windows.len(), 4);
        let mean_rmse = par.windows.iter().map(|w| w.rmse).sum::<f64>() / 4.0;
        assert!((par.rmse - mean_rmse).abs() < 1e-12);
        let seeds: Vec<u64> = par.windows.iter().map(|w| w.seed).collect();
        assert_eq!(seeds, [4, 5, 6, 7]);
    }

    #[test]
    fn parallel_eval_rejects_small_grids() {
        let series = generate_synthetic(2, 60, 4, 4, SynthKind::Eddy).unwrap();
        assert!(matches!(
            parallel_evaluate(&series, 1.0, 2.0, &quick()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn area_sweep_rows_have_growing_regions() {
        let series = generate_synthetic(3, 60, 16, 16, SynthKind::AdvectingWave).unwrap();
        let mut cfg = quick();
        cfg.train.epochs = 1;
        let table = run_sweep(&series, &SweepAxis::Area.default_points(), &cfg).unwrap();
        let cells: Vec<usize> = table.rows.iter().map(|r| r.cells).collect();
        assert_eq!(cells, [16, 64, 256]);
        let wide = table.to_wide_csv();
        let mut lines = wide.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Model,1°×1° RMSE,1°×1° MAPE,2°×2° RMSE,2°×2° MAPE,4°×4° RMSE,4°×4° MAPE"
        );
        assert!(lines.next().unwrap().starts_with("OptFormer,"));
        assert!(lines.next().unwrap().starts_with("Persistence,"));
        assert_eq!(table.to_long_csv().lines().count(), 1 + 6);
    }

    #[test]
    fn season_sweep_filters_test_windows() {
        let series = generate_synthetic(3, 730, 4, 4, SynthKind::Seasonal).unwrap();
        let mut cfg = quick();
        cfg.sampling.t_gap = 20;
        cfg.train.epochs = 1;
        let table = run_sweep(&series, &SweepAxis::Season.default_points(), &cfg).unwrap();
        assert_eq!(table.rows.len(), 4);
        let (_, test) = temporal_split(&series, 0.5).unwrap();
        for row in &table.rows {
            let SweepPoint::Season(s) = row.point else {
                unreachable!()
            };
            for w in &row.report.per_window {
                assert!(s.contains(day_of_year(test.epoch_day(w.window_start)).unwrap()));
            }
        }
    }

    #[test]
    fn mixed_axes_are_rejected() {
        let series = generate_synthetic(3, 60, 4, 4, SynthKind::AdvectingWave).unwrap();
        assert!(matches!(
            run_sweep(
                &series,
                &[SweepPoint::DeltaT(1), SweepPoint::Horizon(3)],
                &quick()
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ablation_table_has_four_rows() {
        let series = generate_synthetic(1, 60, 4, 4, SynthKind::AdvectingWave).unwrap();
        let mut cfg = quick();
        cfg.train.epochs = 1;
        let table = run_ablation(&series, &cfg, 2).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.rows.iter().all(|r| r.seed_rmse.len() == 2));
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "Optical_Attention,Inception,AutoCorrelation,RMSE,MAPE"
        );
        assert!(lines[1].starts_with("✓,✓,✓,"));
        assert!(lines[2].starts_with("×,✓,✓,"));
        assert!(lines[3].starts_with("✓,×,✓,"));
        assert!(lines[4].starts_with("✓,✓,×,"));
    }
}
