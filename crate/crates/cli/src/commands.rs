use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use h2pinn::checkpoint::{save_ensemble, TrainedModel, TrainingMeta};
use h2pinn::config::{AppConfig, Partition};
use h2pinn::data::{augment, load_points_csv, stratified_split, Dataset, Split};
use h2pinn::inference::{self, bench, extrapolation_study, write_predictions, Predictor};
use h2pinn::nn::Mlp;
use h2pinn::physics::{calibrate_cathode_solubility, crossover_concentration, OperatingPoint, PhysicsParams};
use h2pinn::synth::{collocation_points, generate};
use h2pinn::train::{cross_validate, evaluate, rmse, train_with_collocation, with_jobs, Collocation, Partitions};
use h2pinn::uncertainty::{calibration, sensitivity, train_ensemble};
use serde::Serialize;

use crate::{Cli, Command, RunFlags};

pub const CONFIG_ECHO: &str = "config.toml";
pub const MODEL: &str = "model.ckpt";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const CV_CSV: &str = "crossval.csv";
pub const CV_SUMMARY: &str = "crossval_summary.json";
pub const ENSEMBLE_DIR: &str = "ensemble";
pub const CALIBRATION: &str = "calibration.json";
pub const SENSITIVITY: &str = "sensitivity.json";
pub const EXTRAPOLATION_CSV: &str = "extrapolation.csv";
pub const EXTRAPOLATION: &str = "extrapolation.json";
pub const BENCH: &str = "bench.json";

pub fn run(cli: Cli) -> Result<()> {
    let (mut cfg, source) = AppConfig::resolve(cli.config.as_deref())?;
    if let Some(p) = &source {
        log::info!("config: {}", p.display());
    }
    match cli.command {
        Command::Synth { output, n, seed } => {
            if let Some(n) = n {
                cfg.synth.n = n;
            }
            if let Some(seed) = seed {
                cfg.synth.seed = seed;
            }
            let ds = generate(&cfg.synth, &cfg.physics, &cfg.catalog)?;
            create_parent(&output)?;
            ds.save_csv(&output)?;
            summary(&serde_json::json!({ "records": ds.len(), "output": output }))
        }
        Command::Augment { input, output } => {
            let ds = load(&input, &cfg)?;
            let (out, stats) = augment(&ds, &cfg.augment, &cfg.physics)?;
            create_parent(&output)?;
            out.save_csv(&output)?;
            summary(&serde_json::json!({ "input_records": ds.len(), "records": out.len(), "stats": stats, "output": output }))
        }
        Command::Calibrate { input, output } => {
            let text = calibrate_section(&input, &cfg)?;
            if let Some(path) = output {
                create_parent(&path)?;
                fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Train { input, run, calibrate } => {
            apply_run_flags(&mut cfg, &run)?;
            train(&cfg, &input, &run, calibrate)
        }
        Command::Crossval { input, run, folds, reps, betas } => {
            apply_run_flags(&mut cfg, &run)?;
            if let Some(f) = folds {
                cfg.cv.folds = f;
            }
            if let Some(r) = reps {
                cfg.cv.repetitions = r;
            }
            if let Some(seed) = run.seed {
                cfg.cv.base_seed = seed;
            }
            if let Some(b) = betas {
                cfg.cv.betas = b;
            }
            cfg.validate()?;
            crossval(&cfg, &input, &run)
        }
        Command::Ensemble { input, run, members, calibrate } => {
            apply_run_flags(&mut cfg, &run)?;
            if let Some(m) = members {
                cfg.ensemble.members = m;
            }
            if let Some(seed) = run.seed {
                cfg.ensemble.base_seed = seed;
            }
            cfg.validate()?;
            ensemble(&cfg, &input, &run, calibrate)
        }
        Command::Predict { checkpoint, input, output, fusion_alpha, no_fusion, no_clamp } => {
            if let Some(a) = fusion_alpha {
                cfg.fusion.fusion_weight = a;
            }
            if no_fusion {
                cfg.fusion.enabled = false;
            }
            if no_clamp {
                cfg.fusion.clamp_output = false;
            }
            cfg.fusion.validate()?;
            let model = Predictor::load(&checkpoint)?;
            let points: Vec<OperatingPoint> = load_points_csv(&input, model.catalog())?.into_iter().map(|r| r.point).collect();
            let rows = inference::predict(&model, &points, &cfg.fusion)?;
            match output {
                Some(path) => {
                    create_parent(&path)?;
                    write_predictions(&rows, model.catalog(), BufWriter::new(File::create(&path)?))?;
                }
                None => {
                    let mut buf = Vec::new();
                    write_predictions(&rows, model.catalog(), &mut buf)?;
                    io::stdout().lock().write_all(&buf)?;
                }
            }
            Ok(())
        }
        Command::Extrapolate { run } => {
            let mut ec = cfg.extrapolation.clone();
            if let Some(seed) = run.seed {
                ec.train.seed = seed;
                ec.data.seed = seed;
            }
            if let Some(beta) = run.beta {
                check_beta(beta)?;
                ec.pinn_weight = beta;
            }
            let report = with_jobs(run.jobs, || extrapolation_study(&ec, &cfg.physics, &cfg.catalog))??;
            let dir = prepare_dir(&run.output_dir, &AppConfig { extrapolation: ec, ..cfg })?;
            report.write_csv(File::create(dir.join(EXTRAPOLATION_CSV))?)?;
            write_json(&dir.join(EXTRAPOLATION), &report)?;
            summary(&serde_json::json!({ "rows": report.rows.len(), "output_dir": dir }))
        }
        Command::Bench { checkpoint, mode, precision, output_dir } => {
            if let Some(m) = mode {
                cfg.bench.mode = m.into();
            }
            if let Some(p) = precision {
                cfg.bench.precision = p.into();
            }
            let model = match Predictor::load(&checkpoint)? {
                Predictor::Single(m) => m,
                Predictor::Ensemble(mut e) => {
                    log::info!("benchmarking the first of {} ensemble members", e.len());
                    e.members.swap_remove(0)
                }
            };
            let report = bench(&model, &cfg.bench)?;
            if let Some(dir) = output_dir {
                fs::create_dir_all(&dir)?;
                write_json(&dir.join(BENCH), &report)?;
            }
            summary(&serde_json::json!({
                "mode": report.mode,
                "precision": report.precision,
                "samples": report.samples_us.len(),
                "mean_us": report.mean_us,
                "std_us": report.std_us,
                "p50_us": report.p50_us,
                "p95_us": report.p95_us,
                "p99_us": report.p99_us,
            }))
        }
        Command::Report { run_dir, output } => {
            let text = crate::report::render(&run_dir)?;
            match output {
                Some(path) => fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?,
                None => io::stdout().lock().write_all(text.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        bail!(h2pinn::Error::Config(format!("--beta must lie in [0, 1], got {beta}")));
    }
    Ok(())
}

fn apply_run_flags(cfg: &mut AppConfig, run: &RunFlags) -> Result<()> {
    if let Some(seed) = run.seed {
        cfg.train.seed = seed;
    }
    if let Some(beta) = run.beta {
        check_beta(beta)?;
        cfg.train.physics_weight = beta;
    }
    cfg.validate()?;
    Ok(())
}

fn load(input: &Path, cfg: &AppConfig) -> Result<Dataset> {
    Ok(Dataset::load_csv(input, &cfg.catalog)?)
}

fn split(ds: &Dataset, cfg: &AppConfig) -> Result<Split> {
    let strata: Vec<usize> = ds.records.iter().map(|r| r.point.membrane_id).collect();
    Ok(stratified_split(&strata, &cfg.split)?)
}

/// Configured physics, optionally with the cathode solubility fitted on the training partition.
fn training_physics(ds: &Dataset, split: &Split, cfg: &AppConfig, calibrate: bool) -> Result<PhysicsParams> {
    if calibrate {
        Ok(calibrate_cathode_solubility(&ds.subset(&split.train).points(), &cfg.physics)?)
    } else {
        Ok(cfg.physics)
    }
}

fn collocation(cfg: &AppConfig, parts: &Partitions, physics: &PhysicsParams) -> Result<Option<Collocation>> {
    let c = &cfg.collocation;
    if c.points == 0 {
        return Ok(None);
    }
    let pts = collocation_points(&parts.train.points, c.points, c.seed, c.pressure_max)?;
    Ok(Some(Collocation::new(&pts, cfg.catalog.len(), &parts.scaler, physics)?))
}

fn train(cfg: &AppConfig, input: &Path, run: &RunFlags, calibrate: bool) -> Result<()> {
    let ds = load(input, cfg)?;
    let split = split(&ds, cfg)?;
    let physics = training_physics(&ds, &split, cfg, calibrate)?;
    let parts = Partitions::new(&ds, &split, &physics)?;
    let colloc = collocation(cfg, &parts, &physics)?;
    let tc = &cfg.train;
    let mut mlp = Mlp::<f64>::init(tc.seed, &tc.layer_sizes, tc.activation)?;
    let mut report = with_jobs(run.jobs, || train_with_collocation(&mut mlp, &parts.train, &parts.val, colloc.as_ref(), tc))??;
    if !parts.test.labels.is_empty() {
        report.test_metrics = Some(evaluate(&mlp, &parts.test)?);
    }
    let meta = TrainingMeta {
        seed: tc.seed,
        physics_weight: tc.physics_weight,
        epochs: report.stop_epoch,
        best_epoch: report.best_epoch,
    };
    let model = TrainedModel::new(mlp, parts.scaler.clone(), cfg.catalog.clone(), physics, meta)?;
    let dir = prepare_dir(&run.output_dir, &AppConfig { physics, ..cfg.clone() })?;
    model.save(dir.join(MODEL))?;
    write_json(&dir.join(TRAIN_REPORT), &report)?;
    summary(&serde_json::json!({
        "checkpoint": dir.join(MODEL),
        "stop_epoch": report.stop_epoch,
        "best_epoch": report.best_epoch,
        "test_metrics": report.test_metrics,
    }))
}

#[derive(Serialize)]
struct CvSummary<'a> {
    folds: usize,
    repetitions: usize,
    base_seed: u64,
    runs: usize,
    aggregates: &'a [h2pinn::train::CvAggregate],
}

fn crossval(cfg: &AppConfig, input: &Path, run: &RunFlags) -> Result<()> {
    let ds = load(input, cfg)?;
    let plan = cfg.cv.plan();
    let betas = if cfg.cv.betas.is_empty() { vec![cfg.train.physics_weight] } else { cfg.cv.betas.clone() };
    let result = cross_validate(&ds, &cfg.train, &plan, &betas, &cfg.physics, run.jobs)?;
    let dir = prepare_dir(&run.output_dir, cfg)?;
    result.write_csv(File::create(dir.join(CV_CSV))?)?;
    let s = CvSummary {
        folds: plan.folds,
        repetitions: plan.repetitions,
        base_seed: plan.base_seed,
        runs: result.rows.len(),
        aggregates: &result.aggregates,
    };
    write_json(&dir.join(CV_SUMMARY), &s)?;
    summary(&serde_json::json!({ "runs": result.rows.len(), "output": dir.join(CV_CSV), "aggregates": result.aggregates }))
}

#[derive(Serialize)]
struct CalibrationFile {
    members: usize,
    requested: usize,
    excluded_seeds: Vec<u64>,
    partition: Partition,
    points: usize,
    levels: Vec<h2pinn::uncertainty::CoverageLevel>,
}

fn ensemble(cfg: &AppConfig, input: &Path, run: &RunFlags, calibrate: bool) -> Result<()> {
    let ds = load(input, cfg)?;
    let split = split(&ds, cfg)?;
    let physics = training_physics(&ds, &split, cfg, calibrate)?;
    let parts = Partitions::new(&ds, &split, &physics)?;
    let colloc = collocation(cfg, &parts, &physics)?;
    let ec = &cfg.ensemble;
    let e = train_ensemble(&parts, &cfg.catalog, &physics, &cfg.train, colloc.as_ref(), ec.members, ec.base_seed, run.jobs)?;
    let held_out = match ec.calibration_partition {
        Partition::Train => &parts.train.points,
        Partition::Val => &parts.val.points,
        Partition::Test => &parts.test.points,
    };
    let levels = calibration(&e, held_out, &ec.coverage_levels)?;
    let sens = sensitivity(&e, held_out, &cfg.sensitivity)?;
    let dir = prepare_dir(&run.output_dir, &AppConfig { physics, ..cfg.clone() })?;
    save_ensemble(dir.join(ENSEMBLE_DIR), &e.members, e.physics_weight, &e.excluded_seeds)?;
    let cal = CalibrationFile {
        members: e.len(),
        requested: ec.members,
        excluded_seeds: e.excluded_seeds.clone(),
        partition: ec.calibration_partition,
        points: held_out.len(),
        levels,
    };
    write_json(&dir.join(CALIBRATION), &cal)?;
    write_json(&dir.join(SENSITIVITY), &sens)?;
    summary(&serde_json::json!({ "members": e.len(), "ensemble": dir.join(ENSEMBLE_DIR), "coverage": cal.levels }))
}

fn calibrate_section(input: &Path, cfg: &AppConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Section {
        physics: PhysicsParams,
    }
    let ds = load(input, cfg)?;
    let split = split(&ds, cfg)?;
    let train_points = ds.subset(&split.train).points();
    let fitted = calibrate_cathode_solubility(&train_points, &cfg.physics)?;
    let fit_rmse = |p: &PhysicsParams| -> Result<f64> {
        let mut pred = Vec::new();
        let mut obs = Vec::new();
        for pt in train_points.iter().filter(|pt| pt.current_density > 0.0) {
            pred.push(crossover_concentration(pt, p)?.h2_in_o2);
            obs.push(pt.h2_concentration.unwrap_or(f64::NAN));
        }
        Ok(rmse(&pred, &obs)?)
    };
    let mut text = format!(
        "# cathode solubility fitted on {} training records\n# physics RMSE {:.6} -> {:.6} % H2\n",
        train_points.len(),
        fit_rmse(&cfg.physics)?,
        fit_rmse(&fitted)?
    );
    text.push_str(&toml::to_string(&Section { physics: fitted })?);
    Ok(text)
}

/// Creates the output directory and echoes the effective config into it.
fn prepare_dir(dir: &Path, cfg: &AppConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_ECHO), cfg.to_toml()?)?;
    Ok(dir.to_path_buf())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn summary(value: &serde_json::Value) -> Result<()> {
    println!("{value}");
    Ok(())
}
