use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--window",
    "6",
    "--horizon",
    "4",
    "--t-gap",
    "3",
    "--d-model",
    "8",
    "--d-ff",
    "16",
    "--epochs",
    "2",
    "--batch-size",
    "8",
];

fn driftcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftcast"))
        .args(args)
        .env_remove("DRIFTCAST_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = driftcast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(TINY.iter().copied()).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

fn synth(dir: &Path, kind: &str, t: &str, size: &str) -> String {
    let out = dir.join("data");
    ok(&[
        "synth",
        "--kind",
        kind,
        "--T",
        t,
        "--H",
        size,
        "--W",
        size,
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    out.join("synthetic.sstgrid").to_str().unwrap().to_string()
}

#[test]
fn help_lists_defaults() {
    let text = ok(&["train", "--help"]);
    for flag in [
        "--epochs",
        "--batch-size",
        "--d-model",
        "--t-gap",
        "--smoothness-lambda",
        "--extract-mode",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    assert!(text.contains("[default: 220]"));
    assert!(text.contains("[default: 30]"));
    assert!(driftcast(&["--help"]).status.success());
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    assert_eq!(driftcast(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        driftcast(&["train", "--epochs", "x", "--input", "a", "--out", "b"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.sstgrid");
    let out = driftcast(&[
        "train",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
}

#[test]
fn synth_writes_grid_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "advecting_wave", "120", "8");
    let series = driftcast_core_load(&path);
    assert_eq!(series, (120, 8, 8));
    let m = manifest(&dir.path().join("data"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["args"]["kind"], "advecting_wave");
}

fn driftcast_core_load(path: &str) -> (usize, usize, usize) {
    let bytes = fs::read(path).unwrap();
    assert_eq!(&bytes[..4], b"SSTG");
    let dim =
        |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    (dim(0), dim(1), dim(2))
}

#[test]
fn flow_writes_csv_and_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "advecting_wave", "10", "8");
    let out = dir.path().join("flow");
    ok(&[
        "flow",
        "--input",
        &input,
        "--frame",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("flow.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("row,col,u,v"));
    assert_eq!(csv.lines().count(), 65);
    let pgm = fs::read_to_string(out.join("flow_magnitude.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n8 8\n255\n"));
    assert_eq!(manifest(&out)["command"], "flow");
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "advecting_wave", "40", "4");
    let run = dir.path().join("run");
    ok(&with_tiny(&[
        "train",
        "--input",
        &input,
        "--out",
        run.to_str().unwrap(),
    ]));
    assert!(run.join("model.dckp").exists());
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    let m = manifest(&run);
    assert_eq!(m["config"]["train"]["epochs"], 2);
    assert!(m["normalizer"]["std"].as_f64().unwrap() > 0.0);

    let eval = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--input",
        &input,
        "--model",
        run.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["rmse"].as_f64().unwrap().is_finite());
    assert!(eval.join("per_window.csv").exists());

    let pred = dir.path().join("pred");
    ok(&[
        "predict",
        "--input",
        &input,
        "--model",
        run.to_str().unwrap(),
        "--start",
        "3",
        "--out",
        pred.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(pred.join("forecast.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,frame,forecast,truth");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,8,"));
    assert!(!lines[1].ends_with(','));
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "advecting_wave", "40", "4");
    let run = dir.path().join("run");
    let args = with_tiny(&[
        "train",
        "--input",
        &input,
        "--seed",
        "3",
        "--out",
        run.to_str().unwrap(),
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_driftcast"))
        .args(&args)
        .env("DRIFTCAST_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m = manifest(&run);
    assert_eq!(m["seed"], 11);
    assert_eq!(m["seed_source"], "DRIFTCAST_SEED");
    assert_eq!(m["config"]["train"]["seed"], 11);
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "eddy", "40", "4");
    let out = dir.path().join("abl");
    ok(&with_tiny(&[
        "ablate",
        "--input",
        &input,
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "Optical_Attention,Inception,AutoCorrelation,RMSE,MAPE"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("✓,✓,✓,"));
    assert!(lines[2].starts_with("×,✓,✓,"));
    assert!(lines[3].starts_with("✓,×,✓,"));
    assert!(lines[4].starts_with("✓,✓,×,"));
}

#[test]
fn sweep_emits_table_schema() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "seasonal", "60", "4");
    let out = dir.path().join("sweep");
    ok(&with_tiny(&[
        "sweep",
        "--input",
        &input,
        "--axis",
        "delta_t",
        "--values",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]));
    let wide = fs::read_to_string(out.join("sweep_delta_t.csv")).unwrap();
    let lines: Vec<&str> = wide.lines().collect();
    assert_eq!(
        lines[0],
        "Model,Δt = 1 RMSE,Δt = 1 MAPE,Δt = 2 RMSE,Δt = 2 MAPE"
    );
    assert!(lines[1].starts_with("OptFormer,"));
    assert!(lines[2].starts_with("Persistence,"));
    assert!(out.join("sweep_delta_t_long.csv").exists());
}

#[test]
fn parallel_eval_averages_windows() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "eddy", "40", "8");
    let out = dir.path().join("par");
    ok(&with_tiny(&[
        "parallel-eval",
        "--input",
        &input,
        "--eval-span",
        "0.5",
        "--window-span",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(out.join("parallel.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "row,col,seed,rmse,mape,baseline_rmse,baseline_mape"
    );
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("mean,mean,,"));
}
