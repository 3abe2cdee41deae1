//! Markdown summary of a run directory. Output depends only on the result
//! files present, so repeated invocations are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use h2pinn::inference::{BenchReport, ExtrapolationReport};
use h2pinn::train::{CvAggregate, MetricSummary, TrainReport};
use h2pinn::uncertainty::{CoverageLevel, FeatureSensitivity};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::commands::{BENCH, CALIBRATION, CV_SUMMARY, EXTRAPOLATION, SENSITIVITY, TRAIN_REPORT};

#[derive(Deserialize)]
struct CvSummary {
    folds: usize,
    repetitions: usize,
    base_seed: u64,
    runs: usize,
    aggregates: Vec<CvAggregate>,
}

#[derive(Deserialize)]
struct Calibration {
    members: usize,
    requested: usize,
    excluded_seeds: Vec<u64>,
    partition: String,
    points: usize,
    levels: Vec<CoverageLevel>,
}

fn read<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_str(&text).map_err(h2pinn::Error::from).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(value))
}

fn pm(s: &MetricSummary, digits: usize) -> String {
    format!("{:.*} ± {:.*}", digits, s.mean, digits, s.std)
}

pub fn render(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(h2pinn::Error::Empty(format!("run directory {} does not exist", dir.display())).into());
    }
    let mut out = String::from("# h2pinn run report\n");
    let mut sections = 0;

    if let Some(r) = read::<TrainReport>(dir, TRAIN_REPORT)? {
        sections += 1;
        let c = &r.config;
        out.push_str("\n## Training\n\n| quantity | value |\n|---|---|\n");
        writeln!(out, "| seed | {} |", c.seed)?;
        writeln!(out, "| physics weight β | {} |", c.physics_weight)?;
        writeln!(out, "| layers | {:?} |", c.layer_sizes)?;
        writeln!(out, "| epochs run | {} |", r.stop_epoch)?;
        writeln!(out, "| best epoch | {} |", r.best_epoch)?;
        writeln!(out, "| stopped early | {} |", r.stopped_early)?;
        writeln!(out, "| best validation loss | {:.6e} |", r.best_val_loss)?;
        writeln!(out, "| final learning rate | {:.3e} |", r.lr_trace.last().copied().unwrap_or(f64::NAN))?;
        writeln!(out, "| train data loss | {:.6e} |", r.final_train_data_loss)?;
        writeln!(out, "| train physics loss | {:.6e} |", r.final_train_physics_loss)?;
        if let Some(m) = &r.test_metrics {
            writeln!(out, "| test R² | {:.4} |", m.r2)?;
            writeln!(out, "| test RMSE (% H₂) | {:.4} |", m.rmse)?;
            writeln!(out, "| test MAE (% H₂) | {:.4} |", m.mae)?;
            writeln!(out, "| test MAPE (%) | {:.2} |", m.mape)?;
        }
    }

    if let Some(cv) = read::<CvSummary>(dir, CV_SUMMARY)? {
        sections += 1;
        writeln!(
            out,
            "\n## Cross-validation\n\n{} runs: {} folds × {} repetitions, seeds from {}.\n",
            cv.runs, cv.folds, cv.repetitions, cv.base_seed
        )?;
        out.push_str("| β | R² | RMSE | MAE | MAPE (%) |\n|---|---|---|---|---|\n");
        for a in &cv.aggregates {
            writeln!(out, "| {} | {} | {} | {} | {} |", a.beta, pm(&a.r2, 4), pm(&a.rmse, 4), pm(&a.mae, 4), pm(&a.mape, 2))?;
        }
    }

    if let Some(c) = read::<Calibration>(dir, CALIBRATION)? {
        sections += 1;
        writeln!(
            out,
            "\n## Ensemble calibration\n\n{} of {} members (excluded seeds: {:?}); {} points from the {} partition.\n",
            c.members, c.requested, c.excluded_seeds, c.points, c.partition
        )?;
        out.push_str("| nominal | z | observed |\n|---|---|---|\n");
        for l in &c.levels {
            writeln!(out, "| {:.2} | {:.4} | {:.4} |", l.nominal, l.z, l.coverage)?;
        }
    }

    if let Some(s) = read::<Vec<FeatureSensitivity>>(dir, SENSITIVITY)? {
        sections += 1;
        out.push_str("\n## Sensitivity\n\n| feature | mean | std | unit | points |\n|---|---|---|---|---|\n");
        for f in &s {
            writeln!(out, "| {} | {:.4} | {:.4} | {} | {} |", f.feature, f.mean, f.std, f.unit, f.points_used)?;
        }
    }

    if let Some(x) = read::<ExtrapolationReport>(dir, EXTRAPOLATION)? {
        sections += 1;
        writeln!(out, "\n## Pressure extrapolation\n\nTrained up to {} bar.\n", x.train_max_pressure)?;
        out.push_str("| pressure (bar) | method | n | R² | RMSE | MAPE (%) |\n|---|---|---|---|---|---|\n");
        for r in &x.rows {
            writeln!(out, "| {} | {} | {} | {:.4} | {:.4} | {:.2} |", r.pressure, r.method, r.n, r.r2, r.rmse, r.mape)?;
        }
    }

    if let Some(b) = read::<BenchReport>(dir, BENCH)? {
        sections += 1;
        writeln!(
            out,
            "\n## Latency\n\n{:?} calls at {:?}: {} retained of {}.\n",
            b.mode, b.precision, b.samples_us.len(), b.n_total
        )?;
        out.push_str("| mean (µs) | std (µs) | p50 | p95 | p99 |\n|---|---|---|---|---|\n");
        writeln!(out, "| {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |", b.mean_us, b.std_us, b.p50_us, b.p95_us, b.p99_us)?;
    }

    if sections == 0 {
        return Err(h2pinn::Error::Empty(format!("no result files in {}", dir.display())).into());
    }
    Ok(out)
}
