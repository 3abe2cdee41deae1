//! Run configuration: one file with a section per stage. Every section
//! defaults, so a config file only lists what it changes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AugmentConfig, MembraneCatalog, SplitSpec};
use crate::error::{Error, Result};
use crate::inference::{BenchConfig, ExtrapolationConfig, FusionConfig};
use crate::physics::PhysicsParams;
use crate::synth::SynthConfig;
use crate::train::{CvPlan, TrainConfig};
use crate::uncertainty::{Perturbations, DEFAULT_LEVELS};

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "H2PINN_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub physics: PhysicsParams,
    pub catalog: MembraneCatalog,
    pub augment: AugmentConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub collocation: CollocationConfig,
    pub cv: CvConfig,
    pub ensemble: EnsembleConfig,
    pub fusion: FusionConfig,
    pub sensitivity: Perturbations,
    pub synth: SynthConfig,
    pub extrapolation: ExtrapolationConfig,
    pub bench: BenchConfig,
}

/// Unlabelled physics points added to each training batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollocationConfig {
    /// 0 disables collocation.
    pub points: usize,
    pub seed: u64,
    /// Widen the cathode-pressure range of the collocation points to this, bar.
    pub pressure_max: Option<f64>,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        Self { points: 0, seed: 7, pressure_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Physics weights to compare; empty means the training weight alone.
    pub betas: Vec<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        let plan = CvPlan::default();
        Self { folds: plan.folds, repetitions: plan.repetitions, base_seed: plan.base_seed, betas: Vec::new() }
    }
}

impl CvConfig {
    pub fn plan(&self) -> CvPlan {
        CvPlan { folds: self.folds, repetitions: self.repetitions, base_seed: self.base_seed }
    }
}

/// Which partition of the split a step evaluates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    /// Member k is trained with seed `base_seed + k`.
    pub base_seed: u64,
    pub calibration_partition: Partition,
    pub coverage_levels: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 100,
            base_seed: 42,
            calibration_partition: Partition::Test,
            coverage_levels: DEFAULT_LEVELS.to_vec(),
        }
    }
}

impl AppConfig {
    /// Parses TOML, or JSON when the file ends in `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// An explicit path wins, then `$H2PINN_CONFIG`, then built-in defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        if self.catalog.is_empty() {
            return Err(Error::Config("membrane catalog is empty".into()));
        }
        self.augment.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        self.fusion.validate()?;
        if self.cv.folds < 2 || self.cv.repetitions == 0 {
            return Err(Error::Config(format!("cv needs folds >= 2 and repetitions >= 1, got {:?}", self.cv.plan())));
        }
        if self.cv.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Config(format!("cv betas must lie in [0, 1], got {:?}", self.cv.betas)));
        }
        if self.ensemble.members < 2 {
            return Err(Error::Config(format!("ensemble needs at least 2 members, got {}", self.ensemble.members)));
        }
        if self.ensemble.coverage_levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config(format!("coverage levels must lie in (0, 1), got {:?}", self.ensemble.coverage_levels)));
        }
        if let Some(p) = self.collocation.pressure_max {
            if !(p > 0.0) {
                return Err(Error::Config(format!("collocation pressure_max must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let cfg: AppConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, AppConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = AppConfig::default();
        cfg.train.physics_weight = 0.1;
        cfg.physics.solubility_cathode = 2.5e-6;
        cfg.collocation.pressure_max = Some(200.0);
        let back: AppConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_and_unknown_keys() {
        let cfg: AppConfig = toml::from_str("[train]\nphysics_weight = 0.5\n[physics]\ndarcy_coeff = 0.0\n").unwrap();
        assert_eq!(cfg.train.physics_weight, 0.5);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.physics.darcy_coeff, 0.0);
        assert!(toml::from_str::<AppConfig>("[train]\nphysics_wieght = 0.5\n").is_err());
        assert!(toml::from_str::<AppConfig>("[split]\ntrain = 0.5\n").is_err());
    }

    #[test]
    fn json_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"fusion": {"fusion_weight": 0.25}}"#).unwrap();
        assert_eq!(AppConfig::load(&path).unwrap().fusion.fusion_weight, 0.25);
        fs::write(&path, r#"{"fusion": {"fusion_weight": 1.5}}"#).unwrap();
        assert!(matches!(AppConfig::load(&path), Err(Error::Config(_))));
    }
}
