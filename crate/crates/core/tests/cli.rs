use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sigforecast::dataio::{synth_multisin, Dataset, SynthConfig};
use sigforecast::forecast::pinball;

const SMALL_CONFIG: &str = "D = 8\nM = 2\nW = 8\nlags = 3\nepochs = 1\nmin_steps = 30\nlr = 0.01\nseason = 12\n";

fn sigforecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigforecast"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sigforecast(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two short sinusoids with horizon 12 and a trained model on them.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
    root: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data.jsonl");
    let mut lines = String::new();
    for (id, period) in [("a", 12.0), ("b", 8.0)] {
        let target: Vec<f64> = (0..96).map(|t| 2.0 + (2.0 * std::f64::consts::PI * t as f64 / period).sin()).collect();
        lines.push_str(&serde_json::json!({"item_id": id, "start": "2020-01-01", "target": target}).to_string());
        lines.push('\n');
    }
    fs::write(&data, lines).unwrap();
    fs::write(root.join("data.jsonl.meta"), "freq = H\nprediction_length = 12\n").unwrap();
    fs::write(root.join("run.cfg"), SMALL_CONFIG).unwrap();
    let model = root.join("model.ckpt");
    ok(&["train", "--data", s(&data), "--config", s(&root.join("run.cfg")), "--out", s(&model)]);
    Fixture {
        _dir: dir,
        data,
        model,
        root,
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = sigforecast(&["train", "--out", "/tmp/never.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = sigforecast(&["train", "--data", s(&dir.path().join("absent.jsonl")), "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    fs::write(&data, "{\"start\": \"x\", \"target\": [1, 2]}\nnot json\n").unwrap();
    fs::write(dir.path().join("bad.jsonl.meta"), "freq = H\nprediction_length = 2\n").unwrap();
    let out = sigforecast(&["train", "--data", s(&data), "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn train_predict_evaluate() {
    let fx = fixture();
    let trace = csv_rows(&fx.root.join("model.ckpt.trace.csv"));
    assert!(trace.len() >= 30);
    assert!(trace.iter().all(|r| r[1].parse::<f64>().unwrap().is_finite()));

    let forecast = fx.root.join("forecast.csv");
    ok(&["predict", "--model", s(&fx.model), "--data", s(&fx.data), "--out", s(&forecast)]);
    let rows = csv_rows(&forecast);
    assert_eq!(rows.len(), 2 * 12 * 9);
    let band = csv_rows(&fx.root.join("forecast.csv.band.csv"));
    assert_eq!(band.len(), 2 * 12);
    for r in &band {
        let (m, lo, hi): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(lo <= m && m <= hi);
        assert!(((m - lo) - (hi - m)).abs() <= 1e-9 * (1.0 + m.abs()));
    }
    assert_eq!(band[0][1], "84");

    let scored = fx.root.join("scored.csv");
    let out = ok(&[
        "evaluate",
        "--model",
        s(&fx.model),
        "--data",
        s(&fx.data),
        "--forecasts",
        s(&scored),
        "--per-series",
        s(&fx.root.join("per_series.csv")),
        "--seasonal-naive",
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["season"], 12);
    assert!(summary["seasonal_naive_crps"].as_f64().unwrap().is_finite());

    let ds = Dataset::load(&fx.data).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for r in csv_rows(&scored) {
        let i = if r[0] == "a" { 0 } else { 1 };
        let h: usize = r[1].parse().unwrap();
        let y = ds.actuals(i)[h - 1];
        num += 2.0 * pinball(r[3].parse().unwrap(), y, r[2].parse().unwrap());
    }
    for i in 0..ds.len() {
        den += ds.actuals(i).iter().map(|v| v.abs()).sum::<f64>();
    }
    let recomputed = num / (9.0 * den);
    let reported = summary["crps"].as_f64().unwrap();
    assert!((recomputed - reported).abs() <= 1e-12 * reported, "{recomputed} vs {reported}");
    assert_eq!(csv_rows(&fx.root.join("per_series.csv")).len(), 2);
}

#[test]
fn mismatched_horizon_is_incompatible() {
    let fx = fixture();
    fs::write(fx.root.join("data.jsonl.meta"), "freq = H\nprediction_length = 6\n").unwrap();
    let out = sigforecast(&["predict", "--model", s(&fx.model), "--data", s(&fx.data), "--out", s(&fx.root.join("f.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn synth_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synth.jsonl");
    let csv = dir.path().join("synth.csv");
    ok(&["synth", "--out", s(&data), "--seed", "3", "--csv", s(&csv)]);
    let loaded = Dataset::load(&data).unwrap();
    let direct = synth_multisin(&SynthConfig {
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(loaded, direct);
    assert_eq!(csv_rows(&csv).len(), 800);
}

#[test]
fn bench_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    let two = dir.path().join("two.csv");
    for (path, threads) in [(&one, "1"), (&two, "2")] {
        ok(&["bench", "--lengths", "300,3000", "--D", "16", "--M", "3", "--threads", threads, "--out", s(path)]);
    }
    let (a, b) = (csv_rows(&one), csv_rows(&two));
    assert_eq!(a.len(), 2);
    assert_eq!(b[1][3], "2");
    for r in a.iter().chain(&b) {
        assert!(r[1].parse::<f64>().unwrap() > 0.0);
        assert!(r[2].parse::<usize>().unwrap() > 0);
    }
}
