//! Dataset ingestion, feature encoding, splitting and augmentation.

mod augment;
mod features;
mod split;

pub use augment::{augment, AugmentConfig, AugmentStats, Spline};
pub use features::{encode_features, idx, MinMaxScaler, NormalizedData, FEATURE_NAMES, N_FEATURES};
pub use split::{stratified_kfold, stratified_split, Split, SplitSpec};

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::OperatingPoint;

/// Exact CSV header for datasets.
pub const CSV_HEADER: [&str; 11] = [
    "study",
    "membrane",
    "temperature_c",
    "pressure_cathode_bar",
    "pressure_anode_bar",
    "thickness_um",
    "current_density_a_cm2",
    "compression_um",
    "pt_interlayer",
    "h2_concentration_pct",
    "provenance",
];

/// Anode pressure assumed when a row leaves it blank, bar.
pub const ATMOSPHERIC_BAR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Experimental,
    Augmented,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Experimental => "experimental",
            Provenance::Augmented => "augmented",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "experimental" => Ok(Provenance::Experimental),
            "augmented" => Ok(Provenance::Augmented),
            other => Err(Error::Encoding(format!("unknown provenance {other:?}"))),
        }
    }
}

/// Ordered list of membrane classes; the position is the class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembraneCatalog {
    pub classes: Vec<String>,
}

impl Default for MembraneCatalog {
    fn default() -> Self {
        Self {
            classes: [
                "nafion117",
                "nafion212",
                "nafion_d2021",
                "fumatech_e730",
                "nafion117_178um",
                "nafion212_51um",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        }
    }
}

impl MembraneCatalog {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Resolves a class by name (case-insensitive) or by integer index.
    pub fn resolve(&self, token: &str) -> Result<usize> {
        let token = token.trim();
        if let Some(idx) = self.classes.iter().position(|c| c.eq_ignore_ascii_case(token)) {
            return Ok(idx);
        }
        match token.parse::<usize>() {
            Ok(idx) if idx < self.len() => Ok(idx),
            _ => Err(Error::Encoding(format!("unknown membrane class {token:?}"))),
        }
    }

    pub fn name(&self, idx: usize) -> Result<&str> {
        self.classes
            .get(idx)
            .map(String::as_str)
            .ok_or_else(|| Error::Encoding(format!("membrane index {idx} outside catalog of {}", self.len())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub study: String,
    pub point: OperatingPoint,
    pub provenance: Provenance,
}

impl Record {
    pub fn experimental(study: impl Into<String>, point: OperatingPoint) -> Self {
        Self { study: study.into(), point, provenance: Provenance::Experimental }
    }

    /// Label, which every dataset record carries.
    pub fn label(&self) -> f64 {
        self.point.h2_concentration.expect("dataset records are labelled")
    }
}

/// Labelled operating points plus the membrane catalog used to encode them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub catalog: MembraneCatalog,
}

impl Dataset {
    /// Builds a dataset, enforcing record invariants and label presence.
    pub fn new(records: Vec<Record>, catalog: MembraneCatalog) -> Result<Self> {
        let mut problems = Vec::new();
        for (idx, r) in records.iter().enumerate() {
            let mut v = r.point.violations();
            if r.point.h2_concentration.is_none() {
                v.push("missing h2_concentration label".into());
            }
            if r.point.membrane_id >= catalog.len() {
                v.push(format!("membrane index {} outside catalog", r.point.membrane_id));
            }
            if !v.is_empty() {
                problems.push(format!("record {idx}: {}", v.join("; ")));
            }
        }
        if problems.is_empty() {
            Ok(Self { records, catalog })
        } else {
            Err(Error::Domain(problems.join("\n")))
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn points(&self) -> Vec<OperatingPoint> {
        self.records.iter().map(|r| r.point).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.records.iter().map(Record::label).collect()
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            catalog: self.catalog.clone(),
        }
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.records.iter().filter(|r| r.provenance == provenance).count()
    }

    /// Min-max scales every feature using this dataset's own statistics.
    /// Call on the training partition and reuse the scaler for the others.
    pub fn normalize(&self) -> Result<NormalizedData> {
        let features = self.encode()?;
        let scaler = MinMaxScaler::fit(&features)?;
        Ok(NormalizedData {
            features: features.iter().map(|f| scaler.transform(f)).collect(),
            labels: self.labels(),
            scaler,
        })
    }

    /// Scales with externally fitted statistics.
    pub fn normalize_with(&self, scaler: &MinMaxScaler) -> Result<NormalizedData> {
        let features = self.encode()?;
        Ok(NormalizedData {
            features: features.iter().map(|f| scaler.transform(f)).collect(),
            labels: self.labels(),
            scaler: scaler.clone(),
        })
    }

    pub fn encode(&self) -> Result<Vec<[f64; N_FEATURES]>> {
        self.records.iter().map(|r| encode_features(&r.point, self.catalog.len())).collect()
    }

    pub fn load_csv(path: impl AsRef<Path>, catalog: &MembraneCatalog) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let rows = read_rows(file, catalog, true).map_err(|problems| Error::Load {
            path: path.to_path_buf(),
            problems,
        })?;
        Ok(Self { records: rows, catalog: catalog.clone() })
    }

    pub fn from_reader(reader: impl Read, catalog: &MembraneCatalog) -> Result<Self> {
        let rows = read_rows(reader, catalog, true).map_err(|problems| Error::Load {
            path: "<reader>".into(),
            problems,
        })?;
        Ok(Self { records: rows, catalog: catalog.clone() })
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        write_records(&self.records, &self.catalog, writer)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads operating points whose label column may be blank (inference inputs).
pub fn load_points_csv(path: impl AsRef<Path>, catalog: &MembraneCatalog) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_rows(file, catalog, false).map_err(|problems| Error::Load { path: path.to_path_buf(), problems })
}

pub fn write_records(records: &[Record], catalog: &MembraneCatalog, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let p = &r.point;
        w.write_record([
            r.study.clone(),
            catalog.name(p.membrane_id)?.to_string(),
            p.temperature_stack.to_string(),
            p.pressure_cathode.to_string(),
            p.pressure_anode.to_string(),
            p.thickness.to_string(),
            p.current_density.to_string(),
            p.compression.to_string(),
            u8::from(p.pt_interlayer).to_string(),
            p.h2_concentration.map(|x| x.to_string()).unwrap_or_default(),
            r.provenance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(reader: impl Read, catalog: &MembraneCatalog, require_label: bool) -> std::result::Result<Vec<Record>, Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| vec![format!("unreadable header: {e}")])?.clone();
    let missing: Vec<_> = CSV_HEADER.iter().filter(|c| !header.iter().any(|h| h == **c)).collect();
    if !missing.is_empty() || header.len() != CSV_HEADER.len() || header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(vec![format!(
            "header must be exactly {:?}; missing columns {missing:?}",
            CSV_HEADER.join(",")
        )]);
    }

    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (row_idx, row) in rdr.records().enumerate() {
        // header is line 1
        let line = row_idx + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match parse_row(&row, catalog, require_label) {
            Ok(r) => records.push(r),
            Err(msg) => problems.push(format!("line {line}: {msg}")),
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(problems)
    }
}

fn parse_row(row: &csv::StringRecord, catalog: &MembraneCatalog, require_label: bool) -> std::result::Result<Record, String> {
    let field = |i: usize| row.get(i).unwrap_or("");
    let num = |i: usize| -> std::result::Result<f64, String> {
        field(i)
            .parse::<f64>()
            .map_err(|_| format!("{} is not a number: {:?}", CSV_HEADER[i], field(i)))
    };

    let membrane_id = catalog.resolve(field(1)).map_err(|e| e.to_string())?;
    let pressure_anode = if field(4).is_empty() { ATMOSPHERIC_BAR } else { num(4)? };
    let pt_interlayer = match field(8) {
        "0" | "false" | "" => false,
        "1" | "true" => true,
        other => return Err(format!("pt_interlayer must be 0 or 1, got {other:?}")),
    };
    let h2_concentration = if field(9).is_empty() {
        if require_label {
            return Err("missing h2_concentration_pct".into());
        }
        None
    } else {
        Some(num(9)?)
    };
    let point = OperatingPoint {
        temperature_stack: num(2)?,
        pressure_cathode: num(3)?,
        pressure_anode,
        thickness: num(5)?,
        current_density: num(6)?,
        membrane_id,
        compression: num(7)?,
        pt_interlayer,
        h2_concentration,
    };
    let violations = point.violations();
    if !violations.is_empty() {
        return Err(violations.join("; "));
    }
    let provenance = field(10).parse::<Provenance>().map_err(|e| e.to_string())?;
    Ok(Record { study: field(0).to_string(), point, provenance })
}
