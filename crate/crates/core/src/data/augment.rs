//! Physics-constrained spline augmentation.
//!
//! Records sharing every input except current density form a series. Each
//! series is interpolated along the current-density axis and candidate points
//! are kept only if they stay inside the label bounds, preserve the direction of
//! their gap, and agree with the transport model within tolerance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance, Record};
use crate::error::{Error, Result};
use crate::physics::{crossover_concentration, OperatingPoint, PhysicsParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub max_points_per_gap: usize,
    /// Relative tolerance against the transport model.
    pub physics_tolerance: f64,
    /// Label bounds, %.
    pub bounds: (f64, f64),
    pub enforce_monotone: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { max_points_per_gap: 10, physics_tolerance: 0.05, bounds: (0.0, 20.0), enforce_monotone: true }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.physics_tolerance > 0.0) {
            return Err(Error::Config(format!("physics_tolerance must be > 0, got {}", self.physics_tolerance)));
        }
        if !(self.bounds.0 < self.bounds.1) {
            return Err(Error::Config(format!("bounds {:?} must be increasing", self.bounds)));
        }
        Ok(())
    }
}

/// Counters describing one augmentation pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub series: usize,
    pub skipped_series: usize,
    pub candidates: usize,
    pub emitted: usize,
    pub rejected_bounds: usize,
    pub rejected_monotone: usize,
    pub rejected_physics: usize,
    /// Largest number of points emitted into a single gap.
    pub max_emitted_per_gap: usize,
}

/// Interpolant through sorted, distinct knots. Four or more knots give a natural
/// cubic spline; three give the interpolating quadratic; two the chord.
#[derive(Debug, Clone, PartialEq)]
pub enum Spline {
    Linear { x: [f64; 2], y: [f64; 2] },
    Quadratic { x: [f64; 3], y: [f64; 3] },
    Cubic { x: Vec<f64>, y: Vec<f64>, second: Vec<f64> },
}

impl Spline {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} knots vs {} values", x.len(), y.len())));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("spline knots must be strictly increasing"));
        }
        match x.len() {
            0 | 1 => Err(Error::Empty("a spline needs at least two knots".into())),
            2 => Ok(Spline::Linear { x: [x[0], x[1]], y: [y[0], y[1]] }),
            3 => Ok(Spline::Quadratic { x: [x[0], x[1], x[2]], y: [y[0], y[1], y[2]] }),
            _ => Ok(Spline::Cubic { x: x.to_vec(), y: y.to_vec(), second: natural_second_derivatives(x, y) }),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Spline::Linear { x, y } => y[0] + (y[1] - y[0]) * (t - x[0]) / (x[1] - x[0]),
            Spline::Quadratic { x, y } => {
                let l0 = (t - x[1]) * (t - x[2]) / ((x[0] - x[1]) * (x[0] - x[2]));
                let l1 = (t - x[0]) * (t - x[2]) / ((x[1] - x[0]) * (x[1] - x[2]));
                let l2 = (t - x[0]) * (t - x[1]) / ((x[2] - x[0]) * (x[2] - x[1]));
                y[0] * l0 + y[1] * l1 + y[2] * l2
            }
            Spline::Cubic { x, y, second } => {
                let n = x.len();
                let k = match x.partition_point(|&v| v <= t) {
                    0 => 0,
                    p if p >= n => n - 2,
                    p => p - 1,
                };
                let h = x[k + 1] - x[k];
                let a = (x[k + 1] - t) / h;
                let b = (t - x[k]) / h;
                a * y[k] + b * y[k + 1] + ((a * a * a - a) * second[k] + (b * b * b - b) * second[k + 1]) * h * h / 6.0
            }
        }
    }
}

/// Second derivatives of the natural cubic spline (zero at both ends), Thomas algorithm.
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for j in 0..inner {
        let (h0, h1) = (x[j + 1] - x[j], x[j + 2] - x[j + 1]);
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((y[j + 2] - y[j + 1]) / h1 - (y[j + 1] - y[j]) / h0);
    }
    // forward sweep; the sub-diagonal entry of row j is h0 of that row = upper[j-1]
    for j in 1..inner {
        let w = upper[j - 1] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    for j in (0..inner).rev() {
        let next = if j + 1 < inner { m[j + 2] } else { 0.0 };
        m[j + 1] = (rhs[j] - upper[j] * next) / diag[j];
    }
    m
}

/// Bit-exact key of every input except current density.
type SeriesKey = (String, usize, u64, u64, u64, u64, u64, bool);

fn series_key(r: &Record) -> SeriesKey {
    let p = &r.point;
    (
        r.study.clone(),
        p.membrane_id,
        p.temperature_stack.to_bits(),
        p.pressure_cathode.to_bits(),
        p.pressure_anode.to_bits(),
        p.thickness.to_bits(),
        p.compression.to_bits(),
        p.pt_interlayer,
    )
}

/// Returns the experimental records followed by the accepted interpolants.
pub fn augment(ds: &Dataset, cfg: &AugmentConfig, physics: &PhysicsParams) -> Result<(Dataset, AugmentStats)> {
    cfg.validate()?;
    let mut stats = AugmentStats::default();
    let mut series: BTreeMap<SeriesKey, Vec<&Record>> = BTreeMap::new();
    for r in ds.records.iter().filter(|r| r.provenance == Provenance::Experimental) {
        series.entry(series_key(r)).or_default().push(r);
    }

    let mut out: Vec<Record> = ds.records.iter().filter(|r| r.provenance == Provenance::Experimental).cloned().collect();
    for members in series.values() {
        stats.series += 1;
        // replicate measurements at the same current density collapse to their mean
        let mut knots: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for r in members {
            let e = knots.entry(r.point.current_density.to_bits()).or_insert((r.point.current_density, 0.0, 0));
            e.1 += r.label();
            e.2 += 1;
        }
        let mut knots: Vec<(f64, f64)> = knots.into_values().map(|(i, sum, n)| (i, sum / n as f64)).collect();
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.len() < 2 {
            stats.skipped_series += 1;
            continue;
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let spline = Spline::fit(&xs, &ys)?;
        let template = members[0];

        for gap in knots.windows(2) {
            let ((i_a, y_a), (i_b, y_b)) = (gap[0], gap[1]);
            let direction = (y_b - y_a).signum();
            let mut previous = y_a;
            let mut emitted_here = 0;
            let m = cfg.max_points_per_gap;
            for k in 1..=m {
                let i = i_a + (i_b - i_a) * k as f64 / (m + 1) as f64;
                if !(i > i_a && i < i_b) {
                    continue;
                }
                stats.candidates += 1;
                let y = spline.eval(i);
                if !(y.is_finite() && y >= cfg.bounds.0 && y <= cfg.bounds.1) {
                    stats.rejected_bounds += 1;
                    continue;
                }
                if cfg.enforce_monotone && y_a != y_b {
                    let ok = (y - previous) * direction >= 0.0 && (y_b - y) * direction >= 0.0;
                    if !ok {
                        stats.rejected_monotone += 1;
                        continue;
                    }
                }
                let point = OperatingPoint { current_density: i, h2_concentration: Some(y), ..template.point };
                let agrees = match crossover_concentration(&point, physics) {
                    Ok(s) => (y - s.h2_in_o2).abs() <= cfg.physics_tolerance * s.h2_in_o2.abs(),
                    Err(_) => false,
                };
                if !agrees {
                    stats.rejected_physics += 1;
                    continue;
                }
                previous = y;
                emitted_here += 1;
                out.push(Record { study: template.study.clone(), point, provenance: Provenance::Augmented });
            }
            stats.emitted += emitted_here;
            stats.max_emitted_per_gap = stats.max_emitted_per_gap.max(emitted_here);
        }
    }
    Ok((Dataset { records: out, catalog: ds.catalog.clone() }, stats))
}
