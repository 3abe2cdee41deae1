//! Oracle-generated synthetic datasets: the stand-in for unpublished
//! measurements and the ground truth for recovery/extrapolation tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MembraneCatalog, Provenance, Record};
use crate::error::{Error, Result};
use crate::physics::{crossover_concentration, OperatingPoint, PhysicsParams};

/// A membrane class with its nominal thickness (µm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessClass {
    pub membrane_id: usize,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub temperature: (f64, f64),
    pub pressure_cathode: (f64, f64),
    pub pressure_anode: (f64, f64),
    pub current_density: (f64, f64),
    /// Sample current density uniformly in log space (denser at low load,
    /// where crossover varies fastest).
    pub log_current: bool,
    /// Latin-hypercube design per thickness class instead of i.i.d. draws.
    pub latin_hypercube: bool,
    /// When > 1, points come in polarization sweeps of this many records that
    /// share (T, P, membrane) and step evenly through the current range.
    pub series_length: usize,
    pub classes: Vec<ThicknessClass>,
    pub compression: f64,
    /// Gaussian label noise, in % H₂ (absolute).
    pub noise_std: f64,
    pub study: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 200,
            seed: 42,
            temperature: (25.0, 85.0),
            pressure_cathode: (1.0, 80.0),
            pressure_anode: (1.0, 1.0),
            current_density: (0.1, 2.0),
            log_current: false,
            latin_hypercube: false,
            series_length: 0,
            classes: vec![
                ThicknessClass { membrane_id: 0, thickness: 183.0 },
                ThicknessClass { membrane_id: 1, thickness: 51.0 },
                ThicknessClass { membrane_id: 3, thickness: 130.0 },
            ],
            compression: 0.0,
            noise_std: 0.0,
            study: "synthetic".into(),
        }
    }
}

/// Random operating points (unlabelled) drawn from the configured box.
/// Classes are cycled so every class receives `n / classes` points.
pub fn sample_points(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<OperatingPoint>> {
    if cfg.classes.is_empty() {
        return Err(Error::Config("synthetic generator needs at least one thickness class".into()));
    }
    let (i_lo, i_hi) = cfg.current_density;
    if !(i_lo > 0.0 && i_hi >= i_lo) {
        return Err(Error::Config(format!("current range {:?} must be positive", cfg.current_density)));
    }
    let n_classes = cfg.classes.len();
    // unit-cube coordinates for (T, P_ca, P_an, i)
    let mut unit: Vec<[f64; 4]> = (0..cfg.n).map(|_| [0.0; 4]).collect();
    if cfg.latin_hypercube {
        for c in 0..n_classes {
            let members: Vec<usize> = (c..cfg.n).step_by(n_classes).collect();
            let m = members.len() as f64;
            for d in 0..4 {
                let mut strata: Vec<usize> = (0..members.len()).collect();
                strata.shuffle(rng);
                for (&k, s) in members.iter().zip(strata) {
                    unit[k][d] = (s as f64 + rng.gen::<f64>()) / m;
                }
            }
        }
    } else {
        for u in unit.iter_mut() {
            *u = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
        }
    }
    let lerp = |(lo, hi): (f64, f64), u: f64| lo + (hi - lo) * u;
    let sweep = cfg.series_length.max(1);
    if sweep > 1 {
        for series in unit.chunks_mut(sweep) {
            let base = series[0];
            let steps = (series.len() - 1).max(1) as f64;
            for (j, u) in series.iter_mut().enumerate() {
                *u = [base[0], base[1], base[2], j as f64 / steps];
            }
        }
    }
    Ok(unit
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let class = cfg.classes[(k / sweep) % n_classes];
            let current = if cfg.log_current {
                lerp((i_lo.ln(), i_hi.ln()), u[3]).exp()
            } else {
                lerp(cfg.current_density, u[3])
            };
            OperatingPoint {
                temperature_stack: lerp(cfg.temperature, u[0]),
                pressure_cathode: lerp(cfg.pressure_cathode, u[1]),
                pressure_anode: lerp(cfg.pressure_anode, u[2]),
                thickness: class.thickness,
                current_density: current,
                membrane_id: class.membrane_id,
                compression: cfg.compression,
                pt_interlayer: false,
                h2_concentration: None,
            }
        })
        .collect())
}

/// Labels `points` with the oracle, optionally adding noise. Points whose
/// label leaves the valid range are rejected.
pub fn label_points(
    points: &[OperatingPoint],
    params: &PhysicsParams,
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<OperatingPoint>> {
    let noise = Normal::new(0.0, noise_std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let (lo, hi) = OperatingPoint::LABEL_RANGE;
    let mut out = Vec::with_capacity(points.len());
    for pt in points {
        let Ok(state) = crossover_concentration(pt, params) else { continue };
        let y = state.h2_in_o2 + if noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
        if (lo..=hi).contains(&y) {
            out.push(OperatingPoint { h2_concentration: Some(y), ..*pt });
        }
    }
    Ok(out)
}

/// Generates a labelled synthetic dataset of (up to) `cfg.n` records.
pub fn generate(cfg: &SynthConfig, params: &PhysicsParams, catalog: &MembraneCatalog) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = sample_points(cfg, &mut rng)?;
    let labelled = label_points(&points, params, cfg.noise_std, &mut rng)?;
    if labelled.len() < points.len() {
        log::warn!("synthetic generator rejected {} of {} points", points.len() - labelled.len(), points.len());
    }
    let records = labelled
        .into_iter()
        .map(|point| Record { study: cfg.study.clone(), point, provenance: Provenance::Experimental })
        .collect();
    Dataset::new(records, catalog.clone())
}

/// Unlabelled physics points built from `templates`: each keeps a template's
/// membrane geometry and redraws temperature, cathode pressure and current
/// density uniformly over the templates' ranges. `pressure_max` widens the
/// cathode-pressure range upward (e.g. to cover an extrapolation target).
pub fn collocation_points(
    templates: &[OperatingPoint],
    n: usize,
    seed: u64,
    pressure_max: Option<f64>,
) -> Result<Vec<OperatingPoint>> {
    if templates.is_empty() {
        return Err(Error::Empty("collocation needs at least one template point".into()));
    }
    let range = |f: fn(&OperatingPoint) -> f64| {
        templates.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let t = range(|p| p.temperature_stack);
    let mut p_ca = range(|p| p.pressure_cathode);
    if let Some(top) = pressure_max {
        p_ca.1 = p_ca.1.max(top);
    }
    // the oracle is undefined at i = 0
    let i = range(|p| if p.current_density > 0.0 { p.current_density } else { f64::INFINITY });
    if !i.0.is_finite() {
        return Err(Error::Empty("no template with positive current density".into()));
    }
    let i = (i.0, templates.iter().map(|p| p.current_density).fold(i.0, f64::max));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 20 * n + 100 {
            return Err(Error::domain("could not draw valid collocation points from the templates"));
        }
        let base = templates[out.len() % templates.len()];
        let pt = OperatingPoint {
            temperature_stack: draw(t),
            pressure_cathode: draw(p_ca),
            current_density: draw(i),
            h2_concentration: None,
            ..base
        };
        if pt.validate().is_ok() {
            out.push(pt);
        }
    }
    Ok(out)
}
