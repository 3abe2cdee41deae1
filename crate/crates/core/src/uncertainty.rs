//! Deep ensembles: member training, predictive statistics, interval
//! calibration and finite-difference input sensitivity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::checkpoint::{TrainedModel, TrainingMeta};
use crate::data::MembraneCatalog;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::physics::{OperatingPoint, PhysicsParams};
use crate::train::{train_with_collocation, with_jobs, Collocation, Partitions, TrainConfig};

/// The z multiplier of the reported 95% interval.
pub const CI95_Z: f64 = 1.96;
pub const DEFAULT_LEVELS: [f64; 4] = [0.50, 0.80, 0.90, 0.95];

/// Anything that maps an operating point to a predicted concentration (%).
pub trait Predictor {
    fn predict_point(&self, pt: &OperatingPoint) -> Result<f64>;
}

impl Predictor for TrainedModel {
    fn predict_point(&self, pt: &OperatingPoint) -> Result<f64> {
        self.predict(pt)
    }
}

/// Adapts a closure into a [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<F: Fn(&OperatingPoint) -> f64> Predictor for FnPredictor<F> {
    fn predict_point(&self, pt: &OperatingPoint) -> Result<f64> {
        Ok((self.0)(pt))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    /// Members in increasing seed order; all share topology and normalization.
    pub members: Vec<TrainedModel>,
    pub physics_weight: f64,
    pub excluded_seeds: Vec<u64>,
}

impl EnsembleModel {
    pub fn new(members: Vec<TrainedModel>, physics_weight: f64, excluded_seeds: Vec<u64>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::Empty("ensemble has no members".into()))?;
        for m in &members[1..] {
            if m.mlp.sizes() != first.mlp.sizes() || m.mlp.activation() != first.mlp.activation() {
                return Err(Error::Shape("ensemble members differ in topology".into()));
            }
            if m.scaler != first.scaler {
                return Err(Error::Shape("ensemble members use different normalization".into()));
            }
        }
        if members.windows(2).any(|w| w[0].meta.seed >= w[1].meta.seed) {
            return Err(Error::Config("ensemble member seeds must be strictly increasing".into()));
        }
        Ok(Self { members, physics_weight, excluded_seeds })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.meta.seed).collect()
    }

    pub fn predict(&self, pt: &OperatingPoint) -> Result<PredictionWithUncertainty> {
        // members share the scaler, so encode once
        let x = self.members[0].features(pt)?;
        let values: Vec<f64> = self.members.iter().map(|m| m.mlp.forward(&x)).collect();
        Ok(PredictionWithUncertainty::from_values(values))
    }
}

impl Predictor for EnsembleModel {
    fn predict_point(&self, pt: &OperatingPoint) -> Result<f64> {
        Ok(self.predict(pt)?.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWithUncertainty {
    pub mean: f64,
    /// Population standard deviation over members.
    pub std: f64,
    pub ci95: (f64, f64),
    pub member_values: Vec<f64>,
}

impl PredictionWithUncertainty {
    pub fn from_values(member_values: Vec<f64>) -> Self {
        let n = member_values.len() as f64;
        if member_values.len() == 1 {
            log::warn!("single-member ensemble: uncertainty is zero");
        }
        let mean = member_values.iter().sum::<f64>() / n;
        let std = (member_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, ci95: (mean - CI95_Z * std, mean + CI95_Z * std), member_values }
    }

    /// Whether `y` lies within `mean ± z·std` (inclusive).
    pub fn covers(&self, y: f64, z: f64) -> bool {
        (y - self.mean).abs() <= z * self.std
    }
}

pub fn predict_with_uncertainty(e: &EnsembleModel, pt: &OperatingPoint) -> Result<PredictionWithUncertainty> {
    e.predict(pt)
}

/// Trains `n_members` models with seeds `base_seed + idx` on the same partitions.
/// Diverged members are dropped and listed in `excluded_seeds`.
#[allow(clippy::too_many_arguments)]
pub fn train_ensemble(
    parts: &Partitions,
    catalog: &MembraneCatalog,
    physics: &PhysicsParams,
    cfg: &TrainConfig,
    collocation: Option<&Collocation>,
    n_members: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<EnsembleModel> {
    if n_members < 2 {
        return Err(Error::Config(format!("an ensemble needs at least 2 members, got {n_members}")));
    }
    let seeds: Vec<u64> = (0..n_members as u64).map(|k| base_seed + k).collect();
    let fit = |&seed: &u64| -> Result<Option<TrainedModel>> {
        let member_cfg = TrainConfig { seed, ..cfg.clone() };
        let mut mlp = Mlp::<f64>::init(seed, &member_cfg.layer_sizes, member_cfg.activation)?;
        match train_with_collocation(&mut mlp, &parts.train, &parts.val, collocation, &member_cfg) {
            Ok(report) => {
                let meta = TrainingMeta {
                    seed,
                    physics_weight: cfg.physics_weight,
                    epochs: report.stop_epoch,
                    best_epoch: report.best_epoch,
                };
                Ok(Some(TrainedModel::new(mlp, parts.scaler.clone(), catalog.clone(), *physics, meta)?))
            }
            Err(Error::Diverged { epoch }) => {
                log::warn!("ensemble member {seed} diverged at epoch {epoch}; excluded");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let trained: Vec<Option<TrainedModel>> = with_jobs(jobs, || seeds.par_iter().map(fit).collect::<Result<_>>())??;
    let excluded: Vec<u64> = seeds.iter().zip(&trained).filter(|(_, m)| m.is_none()).map(|(s, _)| *s).collect();
    let members: Vec<TrainedModel> = trained.into_iter().flatten().collect();
    if !excluded.is_empty() {
        log::warn!("ensemble size {} of {} requested", members.len(), n_members);
    }
    EnsembleModel::new(members, cfg.physics_weight, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageLevel {
    pub nominal: f64,
    pub z: f64,
    pub coverage: f64,
}

/// Two-sided standard-normal quantile for a central interval of mass `level`.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("coverage level {level} must lie in (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Fraction of labels inside each nominal interval.
pub fn coverage(preds: &[PredictionWithUncertainty], labels: &[f64], levels: &[f64]) -> Result<Vec<CoverageLevel>> {
    if preds.is_empty() {
        return Err(Error::Empty("calibration needs at least one labelled point".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", preds.len(), labels.len())));
    }
    levels
        .iter()
        .map(|&nominal| {
            let z = z_for_level(nominal)?;
            let hits = preds.iter().zip(labels).filter(|(p, y)| p.covers(**y, z)).count();
            Ok(CoverageLevel { nominal, z, coverage: hits as f64 / preds.len() as f64 })
        })
        .collect()
}

/// Ensemble calibration on labelled points.
pub fn calibration(e: &EnsembleModel, points: &[OperatingPoint], levels: &[f64]) -> Result<Vec<CoverageLevel>> {
    let mut preds = Vec::with_capacity(points.len());
    let mut labels = Vec::with_capacity(points.len());
    for pt in points {
        let y = pt.h2_concentration.ok_or_else(|| Error::Metric("calibration point without a label".into()))?;
        preds.push(e.predict(pt)?);
        labels.push(y);
    }
    coverage(&preds, &labels, levels)
}

/// Perturbation half-widths, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbations {
    /// °C
    pub temperature: f64,
    /// bar, applied to each electrode pressure separately
    pub pressure: f64,
    /// A·cm⁻²
    pub current_density: f64,
    /// µm
    pub thickness: f64,
}

impl Default for Perturbations {
    fn default() -> Self {
        Self { temperature: 1.0, pressure: 1.0, current_density: 0.1, thickness: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSensitivity {
    pub feature: String,
    pub unit: String,
    pub delta: f64,
    /// Mean of |∂ŷ/∂x| over the points, in % per unit.
    pub mean: f64,
    /// Population standard deviation over the points.
    pub std: f64,
    pub points_used: usize,
    pub points_skipped: usize,
}

type Shift = fn(&mut OperatingPoint, f64);

/// Central-difference sensitivity |ŷ(p+Δ) − ŷ(p−Δ)| / 2Δ per feature.
/// Points whose perturbation leaves the valid domain are skipped and counted.
pub fn sensitivity(model: &dyn Predictor, points: &[OperatingPoint], d: &Perturbations) -> Result<Vec<FeatureSensitivity>> {
    let features: [(&str, &str, f64, Shift); 5] = [
        ("temperature", "%/°C", d.temperature, |p, h| p.temperature_stack += h),
        ("pressure_cathode", "%/bar", d.pressure, |p, h| p.pressure_cathode += h),
        ("pressure_anode", "%/bar", d.pressure, |p, h| p.pressure_anode += h),
        ("current_density", "%/(A cm⁻²)", d.current_density, |p, h| p.current_density += h),
        ("thickness", "%/µm", d.thickness, |p, h| p.thickness += h),
    ];
    features
        .iter()
        .map(|&(name, unit, delta, shift)| {
            if !(delta > 0.0) {
                return Err(Error::Config(format!("perturbation for {name} must be > 0")));
            }
            let mut values = Vec::with_capacity(points.len());
            let mut skipped = 0;
            for base in points {
                let base = OperatingPoint { h2_concentration: None, ..*base };
                let (mut plus, mut minus) = (base, base);
                shift(&mut plus, delta);
                shift(&mut minus, -delta);
                if plus.validate().is_err() || minus.validate().is_err() {
                    skipped += 1;
                    continue;
                }
                let slope = (model.predict_point(&plus)? - model.predict_point(&minus)?).abs() / (2.0 * delta);
                values.push(slope);
            }
            if skipped > 0 {
                log::warn!("sensitivity: {skipped} points skipped for {name} (perturbation leaves domain)");
            }
            let n = values.len().max(1) as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            Ok(FeatureSensitivity {
                feature: name.into(),
                unit: unit.into(),
                delta,
                mean,
                std,
                points_used: values.len(),
                points_skipped: skipped,
            })
        })
        .collect()
}
