use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::OperatingPoint;

pub const N_FEATURES: usize = 8;

/// Feature names in encoding order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "temperature_c",
    "pressure_cathode_bar",
    "pressure_anode_bar",
    "thickness_um",
    "current_density_a_cm2",
    "membrane_code",
    "compression_um",
    "pt_interlayer",
];

/// Index of each feature in the encoded vector.
pub mod idx {
    pub const TEMPERATURE: usize = 0;
    pub const PRESSURE_CATHODE: usize = 1;
    pub const PRESSURE_ANODE: usize = 2;
    pub const THICKNESS: usize = 3;
    pub const CURRENT_DENSITY: usize = 4;
    pub const MEMBRANE: usize = 5;
    pub const COMPRESSION: usize = 6;
    pub const PT_INTERLAYER: usize = 7;
}

/// Encodes a point as `(T, P_ca, P_an, thickness, i, membrane_code, compression, pt)`.
///
/// The membrane is a single ordinal `index / (class_count − 1)` in `[0, 1]`.
pub fn encode_features(pt: &OperatingPoint, class_count: usize) -> Result<[f64; N_FEATURES]> {
    if pt.membrane_id >= class_count {
        return Err(Error::Encoding(format!(
            "membrane index {} outside {class_count} known classes",
            pt.membrane_id
        )));
    }
    let membrane_code = if class_count > 1 {
        pt.membrane_id as f64 / (class_count - 1) as f64
    } else {
        0.0
    };
    Ok([
        pt.temperature_stack,
        pt.pressure_cathode,
        pt.pressure_anode,
        pt.thickness,
        pt.current_density,
        membrane_code,
        pt.compression,
        f64::from(u8::from(pt.pt_interlayer)),
    ])
}

/// Per-feature min-max statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[[f64; N_FEATURES]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("cannot fit normalization on zero rows".into()));
        }
        let mut min = vec![f64::INFINITY; N_FEATURES];
        let mut max = vec![f64::NEG_INFINITY; N_FEATURES];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// True where the feature was constant in the fitted data; such features map to 0.
    pub fn degenerate(&self) -> Vec<bool> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| !(hi > lo)).collect()
    }

    pub fn transform(&self, row: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let span = self.max[j] - self.min[j];
            out[j] = if span > 0.0 { (row[j] - self.min[j]) / span } else { 0.0 };
        }
        out
    }

    /// Degenerate features come back as their constant value.
    pub fn inverse(&self, row: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let span = self.max[j] - self.min[j];
            out[j] = if span > 0.0 { row[j] * span + self.min[j] } else { self.min[j] };
        }
        out
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.min.len() != dim || self.max.len() != dim {
            return Err(Error::Shape(format!(
                "normalization stats cover {} features, model expects {dim}",
                self.min.len()
            )));
        }
        Ok(())
    }
}

/// Normalized features with physical-unit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedData {
    pub features: Vec<[f64; N_FEATURES]>,
    pub labels: Vec<f64>,
    pub scaler: MinMaxScaler,
}
