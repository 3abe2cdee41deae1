//! Trained-model bundles and their on-disk format.
//!
//! A checkpoint file is `MAGIC`, a little-endian `u32` format version, a
//! `u32` header length, a JSON header (topology, normalization, catalog,
//! training metadata) and then the parameters as little-endian `f64`, in the
//! network's flat order (per layer: row-major weights, then biases).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{encode_features, MembraneCatalog, MinMaxScaler};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};
use crate::physics::{OperatingPoint, PhysicsParams};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"H2PINNck";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub physics_weight: f64,
    pub epochs: usize,
    pub best_epoch: usize,
}

/// A network together with everything needed to run it on physical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub mlp: Mlp<f64>,
    pub scaler: MinMaxScaler,
    pub catalog: MembraneCatalog,
    /// Oracle parameters used for training targets and inference fusion.
    pub physics: PhysicsParams,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    sizes: Vec<usize>,
    activation: Activation,
    scaler: MinMaxScaler,
    catalog: MembraneCatalog,
    physics: PhysicsParams,
    meta: TrainingMeta,
    param_count: usize,
}

impl TrainedModel {
    pub fn new(mlp: Mlp<f64>, scaler: MinMaxScaler, catalog: MembraneCatalog, physics: PhysicsParams, meta: TrainingMeta) -> Result<Self> {
        scaler.check_dim(mlp.input_dim())?;
        Ok(Self { mlp, scaler, catalog, physics, meta })
    }

    /// Normalized feature row for a physical operating point.
    pub fn features(&self, pt: &OperatingPoint) -> Result<Vec<f64>> {
        Ok(self.scaler.transform(&encode_features(pt, self.catalog.len())?).to_vec())
    }

    /// Raw network prediction (% H₂ in O₂), unclamped.
    pub fn predict(&self, pt: &OperatingPoint) -> Result<f64> {
        Ok(self.mlp.forward(&self.features(pt)?))
    }

    /// Prediction in another precision (for the latency path).
    pub fn predict_as<T: Scalar>(&self, mlp: &Mlp<T>, pt: &OperatingPoint) -> Result<f64> {
        let x: Vec<T> = self.features(pt)?.into_iter().map(T::of).collect();
        Ok(mlp.forward(&x).widen())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            sizes: self.mlp.sizes().to_vec(),
            activation: self.mlp.activation(),
            scaler: self.scaler.clone(),
            catalog: self.catalog.clone(),
            physics: self.physics,
            meta: self.meta.clone(),
            param_count: self.mlp.param_count(),
        };
        let json = serde_json::to_vec(&header)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(8 * self.mlp.param_count());
        for p in self.mlp.params() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated file".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json).map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let h: Header = serde_json::from_slice(&json)?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != 8 * h.param_count {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                8 * h.param_count,
                raw.len()
            )));
        }
        let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mlp = Mlp::from_params(&h.sizes, h.activation, params)?;
        h.physics.validate()?;
        Self::new(mlp, h.scaler, h.catalog, h.physics, h.meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(bytes.as_slice())
    }
}

/// Contents of an ensemble directory's manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub version: u32,
    pub physics_weight: f64,
    pub members: Vec<MemberEntry>,
    /// Seeds whose training diverged; they are not part of the ensemble.
    pub excluded_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub seed: u64,
    pub file: String,
}

pub fn member_file(seed: u64) -> String {
    format!("member_{seed:04}.ckpt")
}

/// Writes members plus manifest into `dir` (created if missing).
pub fn save_ensemble(dir: impl AsRef<Path>, members: &[TrainedModel], physics_weight: f64, excluded_seeds: &[u64]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(members.len());
    for m in members {
        let file = member_file(m.meta.seed);
        m.save(dir.join(&file))?;
        entries.push(MemberEntry { seed: m.meta.seed, file });
    }
    let manifest = EnsembleManifest {
        version: FORMAT_VERSION,
        physics_weight,
        members: entries,
        excluded_seeds: excluded_seeds.to_vec(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_ensemble(dir: impl AsRef<Path>) -> Result<(EnsembleManifest, Vec<TrainedModel>)> {
    let dir = dir.as_ref();
    let manifest_path: PathBuf = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)?;
    let members = manifest
        .members
        .iter()
        .map(|m| TrainedModel::load(dir.join(&m.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, members))
}

/// True when `path` is an ensemble directory rather than a single checkpoint.
pub fn is_ensemble(path: impl AsRef<Path>) -> bool {
    path.as_ref().join(MANIFEST).is_file()
}
