//! Inference-time fusion, checkpoint-driven prediction, the pressure
//! extrapolation study and the latency benchmark.

use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{is_ensemble, load_ensemble, TrainedModel, TrainingMeta};
use crate::data::{idx, stratified_split, MembraneCatalog, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::physics::{calibrate_cathode_solubility, crossover_concentration, OperatingPoint, PhysicsParams};
use crate::synth::{generate, label_points, sample_points, SynthConfig};
use crate::train::{metrics, train_with_collocation, Collocation, Partitions, TrainConfig};
use crate::uncertainty::{EnsembleModel, CI95_Z};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// α: weight of the network in `α·ŷ_net + (1 − α)·ŷ_physics`.
    pub fusion_weight: f64,
    pub enabled: bool,
    /// Floor presented predictions at 0 %.
    pub clamp_output: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { fusion_weight: 0.5, enabled: true, clamp_output: true }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(Error::Config(format!("fusion_weight must lie in [0, 1], got {}", self.fusion_weight)));
        }
        Ok(())
    }
}

/// `α·net + (1 − α)·physics`.
pub fn fuse(net: f64, physics: f64, alpha: f64) -> f64 {
    alpha * net + (1.0 - alpha) * physics
}

/// A loaded single model or ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Single(TrainedModel),
    Ensemble(EnsembleModel),
}

impl Predictor {
    /// Loads a checkpoint file or an ensemble directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if is_ensemble(path) {
            let (manifest, members) = load_ensemble(path)?;
            Ok(Self::Ensemble(EnsembleModel::new(members, manifest.physics_weight, manifest.excluded_seeds)?))
        } else {
            Ok(Self::Single(TrainedModel::load(path)?))
        }
    }

    fn reference(&self) -> &TrainedModel {
        match self {
            Self::Single(m) => m,
            Self::Ensemble(e) => &e.members[0],
        }
    }

    pub fn catalog(&self) -> &MembraneCatalog {
        &self.reference().catalog
    }

    pub fn physics(&self) -> &PhysicsParams {
        &self.reference().physics
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub point: OperatingPoint,
    /// Raw network (or ensemble-mean) output.
    pub network: f64,
    pub physics: Option<f64>,
    /// Fused (if enabled) and clamped (if enabled) prediction.
    pub prediction: f64,
    pub std: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

/// Predicts every point; with fusion enabled the oracle must be defined at
/// each point (i > 0), otherwise the call fails.
pub fn predict(model: &Predictor, points: &[OperatingPoint], fusion: &FusionConfig) -> Result<Vec<PredictionRow>> {
    fusion.validate()?;
    let alpha = fusion.fusion_weight;
    let floor = |v: f64| if fusion.clamp_output { v.max(0.0) } else { v };
    points
        .iter()
        .map(|pt| {
            let (network, spread) = match model {
                Predictor::Single(m) => (m.predict(pt)?, None),
                Predictor::Ensemble(e) => {
                    let p = e.predict(pt)?;
                    (p.mean, Some(p.std))
                }
            };
            let physics = if fusion.enabled {
                Some(crossover_concentration(pt, model.physics())?.h2_in_o2)
            } else {
                None
            };
            let (centre, std) = match physics {
                // the oracle is deterministic, so fusion scales the spread by α
                Some(x) => (fuse(network, x, alpha), spread.map(|s| alpha * s)),
                None => (network, spread),
            };
            Ok(PredictionRow {
                point: *pt,
                network,
                physics,
                prediction: floor(centre),
                std,
                ci95: std.map(|s| (floor(centre - CI95_Z * s), floor(centre + CI95_Z * s))),
            })
        })
        .collect()
}

pub const PREDICTION_HEADER: [&str; 15] = [
    "temperature_stack",
    "pressure_cathode",
    "pressure_anode",
    "thickness",
    "current_density",
    "membrane",
    "compression",
    "pt_interlayer",
    "label",
    "network",
    "physics",
    "prediction",
    "std",
    "ci95_low",
    "ci95_high",
];

pub fn write_predictions(rows: &[PredictionRow], catalog: &MembraneCatalog, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_HEADER)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let p = &r.point;
        w.write_record([
            p.temperature_stack.to_string(),
            p.pressure_cathode.to_string(),
            p.pressure_anode.to_string(),
            p.thickness.to_string(),
            p.current_density.to_string(),
            catalog.name(p.membrane_id)?.to_string(),
            p.compression.to_string(),
            p.pt_interlayer.to_string(),
            opt(p.h2_concentration),
            r.network.to_string(),
            opt(r.physics),
            r.prediction.to_string(),
            opt(r.std),
            opt(r.ci95.map(|c| c.0)),
            opt(r.ci95.map(|c| c.1)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtrapolationConfig {
    /// Training-data design; its pressure range is the training range.
    pub data: SynthConfig,
    /// Cathode pressures (bar) at which the three methods are compared.
    pub test_pressures: Vec<f64>,
    pub test_points_per_pressure: usize,
    /// Unlabelled physics points for the PINN, drawn over the data design
    /// with the cathode pressure extended to the largest test pressure.
    pub collocation_points: usize,
    pub pinn_weight: f64,
    pub fusion_weight: f64,
    /// Fit the fusion partner's cathode solubility on the training data.
    pub calibrate_physics: bool,
    pub train: TrainConfig,
}

impl Default for ExtrapolationConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig { n: 300, ..SynthConfig::default() },
            test_pressures: vec![40.0, 120.0, 160.0, 200.0],
            test_points_per_pressure: 60,
            collocation_points: 1_500,
            pinn_weight: 0.3,
            fusion_weight: 0.5,
            calibrate_physics: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRow {
    pub pressure: f64,
    pub method: String,
    pub n: usize,
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub train_max_pressure: f64,
    pub rows: Vec<ExtrapolationRow>,
}

impl ExtrapolationReport {
    pub fn r2(&self, pressure: f64, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.pressure == pressure && r.method == method).map(|r| r.r2)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains a pure network (β = 0) and a PINN on the training pressure range and
/// scores both, plus the PINN/physics fusion, at each test pressure.
pub fn extrapolation_study(cfg: &ExtrapolationConfig, params: &PhysicsParams, catalog: &MembraneCatalog) -> Result<ExtrapolationReport> {
    let ds = generate(&cfg.data, params, catalog)?;
    let strata: Vec<usize> = ds.records.iter().map(|r| r.point.membrane_id).collect();
    let spec = SplitSpec { train_frac: 0.9, val_frac: 0.1, test_frac: 0.0, seed: cfg.data.seed };
    let parts = Partitions::new(&ds, &stratified_split(&strata, &spec)?, params)?;
    let train_points: Vec<OperatingPoint> = parts.train.points.clone();
    let fusion_params = if cfg.calibrate_physics {
        calibrate_cathode_solubility(&train_points, params)?
    } else {
        *params
    };

    let max_test = cfg.test_pressures.iter().copied().fold(cfg.data.pressure_cathode.1, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data.seed.wrapping_add(1));
    let colloc_design = SynthConfig {
        n: cfg.collocation_points,
        pressure_cathode: (cfg.data.pressure_cathode.0, max_test),
        ..cfg.data.clone()
    };
    let colloc_points = sample_points(&colloc_design, &mut rng)?;
    let collocation = Collocation::new(&colloc_points, catalog.len(), &parts.scaler, params)?;

    let fit = |beta: f64, colloc: Option<&Collocation>| -> Result<TrainedModel> {
        let tcfg = TrainConfig { physics_weight: beta, ..cfg.train.clone() };
        let mut mlp = Mlp::<f64>::init(tcfg.seed, &tcfg.layer_sizes, tcfg.activation)?;
        let report = train_with_collocation(&mut mlp, &parts.train, &parts.val, colloc, &tcfg)?;
        log::info!("extrapolation: beta {beta} stopped at epoch {}", report.stop_epoch);
        let meta = TrainingMeta { seed: tcfg.seed, physics_weight: beta, epochs: report.stop_epoch, best_epoch: report.best_epoch };
        TrainedModel::new(mlp, parts.scaler.clone(), catalog.clone(), fusion_params, meta)
    };
    let nn = fit(0.0, None)?;
    let pinn = fit(cfg.pinn_weight, Some(&collocation))?;

    let mut rows = Vec::new();
    for &pressure in &cfg.test_pressures {
        let design = SynthConfig { n: cfg.test_points_per_pressure, pressure_cathode: (pressure, pressure), ..cfg.data.clone() };
        let pts = label_points(&sample_points(&design, &mut rng)?, params, 0.0, &mut rng)?;
        if pts.len() < 2 {
            return Err(Error::Empty(format!("no valid test points at {pressure} bar")));
        }
        let labels: Vec<f64> = pts.iter().map(|p| p.h2_concentration.unwrap_or_default()).collect();
        let nn_pred = pts.iter().map(|p| nn.predict(p)).collect::<Result<Vec<_>>>()?;
        let pinn_pred = pts.iter().map(|p| pinn.predict(p)).collect::<Result<Vec<_>>>()?;
        let fused = pts
            .iter()
            .zip(&pinn_pred)
            .map(|(p, y)| Ok(fuse(*y, crossover_concentration(p, &fusion_params)?.h2_in_o2, cfg.fusion_weight)))
            .collect::<Result<Vec<_>>>()?;
        for (method, pred) in [("nn", &nn_pred), ("pinn", &pinn_pred), ("fusion", &fused)] {
            let m = metrics(pred, &labels)?;
            rows.push(ExtrapolationRow {
                pressure,
                method: method.into(),
                n: labels.len(),
                r2: m.r2,
                rmse: m.rmse,
                mae: m.mae,
                mape: m.mape,
            });
        }
    }
    Ok(ExtrapolationReport { train_max_pressure: cfg.data.pressure_cathode.1, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    #[default]
    Single,
    Batch100,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_total: usize,
    pub n_warmup: usize,
    pub mode: BenchMode,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_total: 1_000, n_warmup: 100, mode: BenchMode::Single, precision: Precision::F64, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub precision: Precision,
    pub n_total: usize,
    pub n_warmup: usize,
    /// Retained per-call latencies, µs.
    pub samples_us: Vec<f64>,
    pub mean_us: f64,
    pub std_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
}

/// Percentile of sorted data by linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Random valid points spanning the model's normalization range.
pub fn random_points(model: &TrainedModel, n: usize, seed: u64) -> Vec<OperatingPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = &model.scaler;
    let mut draw = |j: usize| {
        let (lo, hi) = (s.min[j], s.max[j]);
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pt = OperatingPoint {
            temperature_stack: draw(idx::TEMPERATURE),
            pressure_cathode: draw(idx::PRESSURE_CATHODE),
            pressure_anode: draw(idx::PRESSURE_ANODE),
            thickness: draw(idx::THICKNESS),
            current_density: draw(idx::CURRENT_DENSITY),
            membrane_id: 0,
            compression: draw(idx::COMPRESSION),
            pt_interlayer: draw(idx::PT_INTERLAYER) >= 0.5,
            h2_concentration: None,
        };
        let pt = OperatingPoint { membrane_id: out.len() % model.catalog.len().max(1), ..pt };
        if pt.validate().is_ok() {
            out.push(pt);
        }
    }
    out
}

/// Times `n_total` calls (one point, or 100 points per call in batch mode),
/// discarding the first `n_warmup`. Runs on the calling thread only.
pub fn bench(model: &TrainedModel, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_warmup >= cfg.n_total {
        return Err(Error::Config(format!("n_warmup {} must be < n_total {}", cfg.n_warmup, cfg.n_total)));
    }
    let per_call = match cfg.mode {
        BenchMode::Single => 1,
        BenchMode::Batch100 => 100,
    };
    let points = random_points(model, cfg.n_total * per_call, cfg.seed);
    let mlp32: Mlp<f32> = model.mlp.cast();
    let mut samples = Vec::with_capacity(cfg.n_total);
    for call in points.chunks(per_call) {
        let start = Instant::now();
        for pt in call {
            let y = match cfg.precision {
                Precision::F64 => model.predict(black_box(pt))?,
                Precision::F32 => model.predict_as(&mlp32, black_box(pt))?,
            };
            black_box(y);
        }
        samples.push(start.elapsed().as_secs_f64() * 1e6);
    }
    let kept: Vec<f64> = samples.split_off(cfg.n_warmup);
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let std = (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = kept.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        mode: cfg.mode,
        precision: cfg.precision,
        n_total: cfg.n_total,
        n_warmup: cfg.n_warmup,
        samples_us: kept,
        mean_us: mean,
        std_us: std,
        p50_us: percentile(&sorted, 50.0),
        p95_us: percentile(&sorted, 95.0),
        p99_us: percentile(&sorted, 99.0),
    })
}
