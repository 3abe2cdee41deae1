use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use h2pinn::config::AppConfig;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_h2pinn");

const SMALL: &str = r#"
[synth]
n = 60
series_length = 6

[train]
max_epochs = 25
layer_sizes = [8, 12, 1]

[ensemble]
members = 3

[extrapolation]
test_pressures = [40.0, 160.0]
test_points_per_pressure = 15
collocation_points = 60

[extrapolation.data]
n = 60

[extrapolation.train]
max_epochs = 15
layer_sizes = [8, 8, 1]
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let sb = Self { dir: tempfile::tempdir().unwrap() };
        fs::write(sb.path("c.toml"), SMALL).unwrap();
        let out = sb.run(&["synth", "--output", "data.csv"]);
        assert!(out.status.success(), "{}", stderr(&out));
        sb
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_with("c.toml", args)
    }

    fn run_with(&self, config: &str, args: &[&str]) -> Output {
        Command::new(BIN)
            .current_dir(self.dir.path())
            .env_remove("H2PINN_CONFIG")
            .arg("--config")
            .arg(config)
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        self.ok_with("c.toml", args)
    }

    fn ok_with(&self, config: &str, args: &[&str]) -> String {
        let out = self.run_with(config, args);
        assert!(out.status.success(), "{args:?} failed: {}", stderr(&out));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn error_json(out: &Output) -> serde_json::Value {
    let line = stderr(out).lines().last().unwrap_or_default().to_string();
    serde_json::from_str(&line).unwrap_or_else(|_| panic!("stderr is not JSON: {line}"))
}

#[test]
fn usage_errors_exit_2() {
    let sb = Sandbox::new();
    for args in [&["frobnicate"][..], &["train", "--input", "data.csv", "--bogus"], &["predict", "--input", "data.csv"]] {
        let out = sb.run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).contains("Usage"), "{args:?}");
    }
}

#[test]
fn runtime_errors_are_json_on_stderr() {
    let sb = Sandbox::new();
    let out = sb.run(&["predict", "--checkpoint", "missing.ckpt", "--input", "data.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "checkpoint");

    let out = sb.run(&["train", "--input", "data.csv", "--beta", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "config");

    fs::write(sb.path("bad.toml"), "[train]\nphysics_wieght = 0.3\n").unwrap();
    let out = sb.run_with("bad.toml", &["train", "--input", "data.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn train_writes_checkpoint_and_report_deterministically() {
    let sb = Sandbox::new();
    sb.ok(&["train", "--input", "data.csv", "--beta", "0.3", "--seed", "42", "--output-dir", "a"]);
    sb.ok(&["train", "--input", "data.csv", "--beta", "0.3", "--seed", "42", "--output-dir", "b"]);
    let a = fs::read(sb.path("a/model.ckpt")).unwrap();
    assert_eq!(a, fs::read(sb.path("b/model.ckpt")).unwrap());
    assert_eq!(&a[..8], b"H2PINNck");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(sb.path("a/train_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["physics_weight"], 0.3);
    assert_eq!(report["config"]["seed"], 42);
    assert!(report["test_metrics"]["r2"].is_number());
    let echoed = AppConfig::load(sb.path("a/config.toml")).unwrap();
    assert_eq!(echoed.train.physics_weight, 0.3);

    sb.ok(&["train", "--input", "data.csv", "--seed", "43", "--output-dir", "c"]);
    assert_ne!(a, fs::read(sb.path("c/model.ckpt")).unwrap());
}

#[test]
fn predict_fusion_endpoints_and_undefined_oracle() {
    let sb = Sandbox::new();
    sb.ok(&["train", "--input", "data.csv", "--output-dir", "run"]);
    sb.ok(&["predict", "--checkpoint", "run/model.ckpt", "--input", "data.csv", "--fusion-alpha", "0", "--no-clamp", "--output", "p0.csv"]);
    let (header, rows) = csv_rows(&sb.path("p0.csv"));
    assert_eq!(rows.len(), 60);
    let (pred, phys, net) = (column(&header, "prediction"), column(&header, "physics"), column(&header, "network"));
    for r in &rows {
        assert_eq!(r[pred], r[phys]);
    }
    let stdout = sb.ok(&["predict", "--checkpoint", "run/model.ckpt", "--input", "data.csv", "--fusion-alpha", "1", "--no-clamp"]);
    let mut reader = csv::Reader::from_reader(stdout.as_bytes());
    for r in reader.records() {
        let r = r.unwrap();
        assert_eq!(r[pred], r[net]);
    }

    // i = 0: the oracle is undefined, so only the fusion-off path works
    let text = fs::read_to_string(sb.path("data.csv")).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i_col = head.split(',').position(|h| h == "current_density_a_cm2").unwrap();
    let label_col = head.split(',').position(|h| h == "h2_concentration_pct").unwrap();
    let zero: Vec<&str> = fields
        .iter()
        .enumerate()
        .map(|(k, f)| if k == i_col { "0" } else if k == label_col { "" } else { f })
        .collect();
    fs::write(sb.path("zero.csv"), format!("{head}\n{}\n", zero.join(","))).unwrap();
    let out = sb.run(&["predict", "--checkpoint", "run/model.ckpt", "--input", "zero.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "undefined_concentration");
    let stdout = sb.ok(&["predict", "--checkpoint", "run/model.ckpt", "--input", "zero.csv", "--no-fusion"]);
    assert_eq!(stdout.lines().count(), 2);
}

#[test]
fn crossval_runs_the_full_seed_ledger() {
    let sb = Sandbox::new();
    fs::write(sb.path("cv.toml"), "[train]\nmax_epochs = 3\nlayer_sizes = [8, 4, 1]\n").unwrap();
    sb.ok_with("cv.toml", &["crossval", "--input", "data.csv", "--folds", "5", "--reps", "20", "--output-dir", "cv"]);
    let (header, rows) = csv_rows(&sb.path("cv/crossval.csv"));
    assert_eq!(rows.len(), 100);
    let (rep, fold, seed) = (column(&header, "rep"), column(&header, "fold"), column(&header, "seed"));
    for r in &rows {
        let (rr, ff, ss): (u64, u64, u64) = (r[rep].parse().unwrap(), r[fold].parse().unwrap(), r[seed].parse().unwrap());
        assert_eq!(ss, 42 + 5 * rr + ff);
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(sb.path("cv/crossval_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 100);
    assert_eq!(summary["aggregates"][0]["r2"]["n"], 100);
}

#[test]
fn ensemble_predictions_carry_uncertainty() {
    let sb = Sandbox::new();
    sb.ok(&["ensemble", "--input", "data.csv", "--seed", "10", "--output-dir", "ens"]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(sb.path("ens/ensemble/manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["members"].as_array().unwrap().iter().map(|m| m["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["member_0010.ckpt", "member_0011.ckpt", "member_0012.ckpt"]);
    let cal: serde_json::Value = serde_json::from_str(&fs::read_to_string(sb.path("ens/calibration.json")).unwrap()).unwrap();
    assert_eq!(cal["levels"].as_array().unwrap().len(), 4);
    assert_eq!(cal["partition"], "test");

    sb.ok(&["predict", "--checkpoint", "ens/ensemble", "--input", "data.csv", "--output", "p.csv"]);
    let (header, rows) = csv_rows(&sb.path("p.csv"));
    let (std, lo, hi, pred) = (column(&header, "std"), column(&header, "ci95_low"), column(&header, "ci95_high"), column(&header, "prediction"));
    for r in &rows {
        let v = |k: usize| r[k].parse::<f64>().unwrap();
        assert!(v(std) >= 0.0);
        assert!(v(lo) <= v(pred) && v(pred) <= v(hi));
    }
}

#[test]
fn bench_and_report() {
    let sb = Sandbox::new();
    sb.ok(&["train", "--input", "data.csv", "--output-dir", "run"]);
    sb.ok(&["bench", "--checkpoint", "run/model.ckpt", "--output-dir", "run"]);
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(sb.path("run/bench.json")).unwrap()).unwrap();
    assert_eq!(b["samples_us"].as_array().unwrap().len(), 900);
    let (p50, p95, p99) = (b["p50_us"].as_f64().unwrap(), b["p95_us"].as_f64().unwrap(), b["p99_us"].as_f64().unwrap());
    assert!(p50 <= p95 && p95 <= p99);
    let batch = sb.ok(&["bench", "--checkpoint", "run/model.ckpt", "--mode", "batch100", "--precision", "f32"]);
    assert!(batch.contains("\"batch100\""));

    let first = sb.ok(&["report", "--run-dir", "run"]);
    let second = sb.ok(&["report", "--run-dir", "run"]);
    assert_eq!(first, second);
    assert!(first.contains("## Training") && first.contains("## Latency"));

    fs::create_dir(sb.path("empty")).unwrap();
    let out = sb.run(&["report", "--run-dir", "empty"]);
    assert_eq!(error_json(&out)["error"], "empty");
}

#[test]
fn augment_and_calibrate() {
    let sb = Sandbox::new();
    let summary = sb.ok(&["augment", "--input", "data.csv", "--output", "aug.csv"]);
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(summary["records"].as_u64().unwrap() > 60);
    let (header, rows) = csv_rows(&sb.path("aug.csv"));
    assert_eq!(header, h2pinn::data::CSV_HEADER);
    let prov = column(&header, "provenance");
    assert_eq!(rows.iter().filter(|r| r[prov] == "experimental").count(), 60);
    assert!(rows.iter().any(|r| r[prov] == "augmented"));

    // oracle-generated labels: calibration recovers the configured solubility
    let text = sb.ok(&["calibrate", "--input", "data.csv", "--output", "physics.toml"]);
    assert_eq!(text, fs::read_to_string(sb.path("physics.toml")).unwrap());
    let cfg: AppConfig = toml::from_str(&text).unwrap();
    assert!((cfg.physics.solubility_cathode / 1.0e-6 - 1.0).abs() < 1e-9);
}

#[test]
fn config_path_from_environment() {
    let sb = Sandbox::new();
    fs::write(sb.path("env.toml"), "[train]\nmax_epochs = 4\nlayer_sizes = [8, 4, 1]\nphysics_weight = 0.7\n").unwrap();
    let out = Command::new(BIN)
        .current_dir(sb.path(""))
        .env("H2PINN_CONFIG", sb.path("env.toml"))
        .args(["train", "--input", "data.csv", "--output-dir", "env"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(sb.path("env/train_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["physics_weight"], 0.7);
    assert_eq!(report["stop_epoch"], 4);
}

#[test]
fn extrapolate_writes_the_comparison_table() {
    let sb = Sandbox::new();
    sb.ok(&["extrapolate", "--seed", "3", "--output-dir", "x"]);
    let (header, rows) = csv_rows(&sb.path("x/extrapolation.csv"));
    assert_eq!(rows.len(), 6);
    let method = column(&header, "method");
    let methods: Vec<&str> = rows.iter().map(|r| r[method].as_str()).collect();
    assert_eq!(methods, ["nn", "pinn", "fusion", "nn", "pinn", "fusion"]);
    assert!(sb.ok(&["report", "--run-dir", "x"]).contains("## Pressure extrapolation"));
}
