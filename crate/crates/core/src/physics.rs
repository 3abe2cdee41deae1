//! Mechanistic hydrogen crossover model.
//!
//! The chain runs from operating conditions to the H₂-in-O₂ concentration:
//!
//! ```text
//! T_stack, i ──► T_m ──► D_H2,w ──► D_eff ─┐
//! P_ca, i ──► P_ca_eff ──► c_sat_ca ───────┼──► Ṁ_H2_co ──► X_H2 = Ṁ_H2_co / Ṁ_O2 · 100
//! P_an ──► c_sat_an ───────────────────────┘                   ▲
//! i ──► Ṁ_H2 = i/2F, Ṁ_O2 = i/4F ─────────────────────────────┘
//! ```
//!
//! Everything is evaluated in double precision in a cm–mol–s–bar system.
//! Inputs arrive in the units of [`OperatingPoint`] (°C, bar, µm, A·cm⁻²) and
//! are converted once at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CELSIUS_TO_KELVIN: f64 = 273.15;
const M2_TO_CM2: f64 = 1.0e4;
const UM_TO_CM: f64 = 1.0e-4;
const MMHG_TO_BAR: f64 = 1.333_223_684e-3;

/// Number of physics residual terms.
pub const N_RESIDUALS: usize = 11;

/// Names of the residual terms, in [`physics_residuals`] order.
pub const RESIDUAL_NAMES: [&str; N_RESIDUALS] = [
    "faraday_h2",
    "faraday_o2",
    "fick",
    "henry_cathode",
    "henry_anode",
    "thermal",
    "water_activity",
    "water_content",
    "diffusion",
    "temperature_dependence",
    "crossover_ratio",
];

/// How water activity is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SatPressureModel {
    /// `a = water_activity` (1.0: fully humidified membrane).
    #[default]
    FixedActivity,
    /// `a = water_partial_pressure / P_sat(T_m)` with the Antoine correlation for water.
    Antoine,
}

/// Fixed transport constants. Field names double as config-file keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    /// C·mol⁻¹
    pub faraday_const: f64,
    pub porosity: f64,
    pub tortuosity: f64,
    /// bar²·(A·cm⁻²)⁻¹
    pub darcy_coeff: f64,
    /// K
    pub ref_temp: f64,
    /// m²·s⁻¹
    pub base_diffusivity: f64,
    /// K⁻¹
    pub temp_coeff: f64,
    /// mol·cm⁻³·bar⁻¹
    pub solubility_cathode: f64,
    /// mol·cm⁻³·bar⁻¹
    pub solubility_anode: f64,
    pub sat_pressure_model: SatPressureModel,
    /// Activity used by [`SatPressureModel::FixedActivity`].
    pub water_activity: f64,
    /// bar, used by [`SatPressureModel::Antoine`].
    pub water_partial_pressure: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            faraday_const: 96_485.0,
            porosity: 0.28,
            tortuosity: 1.5,
            darcy_coeff: 1.0e-5,
            ref_temp: 298.0,
            base_diffusivity: 1.0e-9,
            temp_coeff: 0.01,
            solubility_cathode: 1.0e-6,
            solubility_anode: 1.0e-6,
            sat_pressure_model: SatPressureModel::FixedActivity,
            water_activity: 1.0,
            water_partial_pressure: 0.0317,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("faraday_const", self.faraday_const),
            ("porosity", self.porosity),
            ("tortuosity", self.tortuosity),
            ("darcy_coeff", self.darcy_coeff),
            ("ref_temp", self.ref_temp),
            ("base_diffusivity", self.base_diffusivity),
            ("temp_coeff", self.temp_coeff),
            ("solubility_cathode", self.solubility_cathode),
            ("solubility_anode", self.solubility_anode),
            ("water_partial_pressure", self.water_partial_pressure),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.water_activity) {
            return Err(Error::Config(format!(
                "water_activity must lie in [0, 1], got {}",
                self.water_activity
            )));
        }
        Ok(())
    }

    /// ε/τ
    pub fn porosity_ratio(&self) -> f64 {
        self.porosity / self.tortuosity
    }
}

/// One physical input record plus the optional measured label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// °C
    pub temperature_stack: f64,
    /// bar
    pub pressure_cathode: f64,
    /// bar
    pub pressure_anode: f64,
    /// µm
    pub thickness: f64,
    /// A·cm⁻²
    pub current_density: f64,
    /// Index into the membrane catalog.
    pub membrane_id: usize,
    /// µm
    pub compression: f64,
    pub pt_interlayer: bool,
    /// % H₂ in O₂
    pub h2_concentration: Option<f64>,
}

impl OperatingPoint {
    pub const TEMPERATURE_RANGE: (f64, f64) = (0.0, 150.0);
    pub const LABEL_RANGE: (f64, f64) = (0.0, 20.0);

    /// Checks the record invariants; returns every violation found.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (t_lo, t_hi) = Self::TEMPERATURE_RANGE;
        let finite = [
            self.temperature_stack,
            self.pressure_cathode,
            self.pressure_anode,
            self.thickness,
            self.current_density,
            self.compression,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            out.push("non-finite input".to_string());
            return out;
        }
        if !(t_lo..=t_hi).contains(&self.temperature_stack) {
            out.push(format!(
                "temperature {} °C outside [{t_lo}, {t_hi}]",
                self.temperature_stack
            ));
        }
        if self.pressure_cathode < 0.0 {
            out.push(format!("cathode pressure {} < 0", self.pressure_cathode));
        }
        if self.pressure_anode < 0.0 {
            out.push(format!("anode pressure {} < 0", self.pressure_anode));
        }
        if self.compression < 0.0 {
            out.push(format!("compression {} < 0", self.compression));
        }
        if self.thickness <= self.compression {
            out.push(format!(
                "thickness {} µm must exceed compression {} µm",
                self.thickness, self.compression
            ));
        }
        if self.current_density < 0.0 {
            out.push(format!("current density {} < 0", self.current_density));
        }
        if let Some(x) = self.h2_concentration {
            let (lo, hi) = Self::LABEL_RANGE;
            if !(x.is_finite() && (lo..=hi).contains(&x)) {
                out.push(format!("h2_concentration {x} % outside [{lo}, {hi}]"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(v.join("; ")))
        }
    }

    /// Compressed diffusion path, cm.
    pub fn diffusion_length_cm(&self) -> f64 {
        (self.thickness - self.compression) * UM_TO_CM
    }
}

/// Every intermediate of the crossover chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportState {
    /// mol·s⁻¹·cm⁻²
    pub h2_production: f64,
    /// mol·s⁻¹·cm⁻²
    pub o2_production: f64,
    /// bar
    pub effective_cathode_pressure: f64,
    /// mol·cm⁻³
    pub saturation_cathode: f64,
    /// mol·cm⁻³
    pub saturation_anode: f64,
    /// °C
    pub membrane_temperature: f64,
    pub water_activity: f64,
    pub water_content: f64,
    /// cm²·s⁻¹
    pub diffusivity_water: f64,
    /// cm²·s⁻¹
    pub diffusivity_effective: f64,
    /// mol·s⁻¹·cm⁻²
    pub crossover_flux: f64,
    /// % H₂ in O₂
    pub h2_in_o2: f64,
}

/// H₂ and O₂ production rates, mol·s⁻¹·cm⁻².
pub fn faraday_rates(current_density: f64, p: &PhysicsParams) -> Result<(f64, f64)> {
    if !(current_density >= 0.0) {
        return Err(Error::domain(format!(
            "current density must be >= 0, got {current_density}"
        )));
    }
    Ok((
        current_density / (2.0 * p.faraday_const),
        current_density / (4.0 * p.faraday_const),
    ))
}

/// `√(P_ca² + K_D·i)`, bar.
pub fn effective_cathode_pressure(pressure_cathode: f64, current_density: f64, p: &PhysicsParams) -> Result<f64> {
    if pressure_cathode < 0.0 || current_density < 0.0 {
        return Err(Error::domain(format!(
            "pressure ({pressure_cathode}) and current density ({current_density}) must be >= 0"
        )));
    }
    Ok((pressure_cathode * pressure_cathode + p.darcy_coeff * current_density).sqrt())
}

/// Membrane temperature with ohmic heating, °C.
pub fn membrane_temperature(temperature_stack: f64, current_density: f64) -> Result<f64> {
    if current_density < 0.0 {
        return Err(Error::domain(format!("current density must be >= 0, got {current_density}")));
    }
    Ok(temperature_stack + 0.5 * current_density + 0.1 * current_density * current_density)
}

/// Springer water-content correlation λ(a).
pub fn water_content(activity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&activity) {
        return Err(Error::domain(format!("water activity must lie in [0, 1], got {activity}")));
    }
    Ok(springer(activity))
}

fn springer(a: f64) -> f64 {
    0.043 + 17.81 * a - 39.85 * a * a + 36.0 * a * a * a
}

/// Saturation pressure of water, bar (Antoine, 1–100 °C constants).
pub fn water_saturation_pressure(temperature_c: f64) -> f64 {
    let log10_mmhg = 8.07131 - 1730.63 / (233.426 + temperature_c);
    10f64.powf(log10_mmhg) * MMHG_TO_BAR
}

/// Water activity implied by the configured model at membrane temperature `t_m` (°C).
pub fn water_activity(membrane_temperature_c: f64, p: &PhysicsParams) -> f64 {
    match p.sat_pressure_model {
        SatPressureModel::FixedActivity => p.water_activity,
        SatPressureModel::Antoine => {
            (p.water_partial_pressure / water_saturation_pressure(membrane_temperature_c)).min(1.0)
        }
    }
}

/// `(D_H2,w, D_eff)` in cm²·s⁻¹ at membrane temperature `t_m_kelvin`.
pub fn diffusivity(t_m_kelvin: f64, p: &PhysicsParams) -> Result<(f64, f64)> {
    if !(t_m_kelvin > 0.0) {
        return Err(Error::domain(format!("membrane temperature must be > 0 K, got {t_m_kelvin}")));
    }
    let factor = 1.0 + p.temp_coeff * (t_m_kelvin - p.ref_temp);
    if factor <= 0.0 {
        return Err(Error::domain(format!(
            "linearized diffusivity is non-positive at {t_m_kelvin} K"
        )));
    }
    let d_water = p.base_diffusivity * factor * M2_TO_CM2;
    Ok((d_water, p.porosity_ratio() * d_water))
}

/// Runs the full crossover chain for one operating point.
pub fn crossover_concentration(pt: &OperatingPoint, p: &PhysicsParams) -> Result<TransportState> {
    OperatingPoint { h2_concentration: None, ..*pt }.validate()?;
    let i = pt.current_density;
    if i <= 0.0 {
        return Err(Error::UndefinedConcentration(i));
    }
    let (h2_production, o2_production) = faraday_rates(i, p)?;
    let membrane_temperature = membrane_temperature(pt.temperature_stack, i)?;
    let (diffusivity_water, diffusivity_effective) =
        diffusivity(membrane_temperature + CELSIUS_TO_KELVIN, p)?;
    let effective_cathode_pressure = effective_cathode_pressure(pt.pressure_cathode, i, p)?;
    let saturation_cathode = p.solubility_cathode * effective_cathode_pressure;
    let saturation_anode = p.solubility_anode * pt.pressure_anode;
    if saturation_anode > saturation_cathode {
        return Err(Error::domain(format!(
            "anode saturation {saturation_anode:e} exceeds cathode saturation {saturation_cathode:e}; \
             reverse crossover is not modelled"
        )));
    }
    let water_activity = water_activity(membrane_temperature, p);
    let water_content = water_content(water_activity)?;

    let crossover_flux =
        diffusivity_effective * (saturation_cathode - saturation_anode) / pt.diffusion_length_cm();
    let h2_in_o2 = crossover_flux / o2_production * 100.0;

    Ok(TransportState {
        h2_production,
        o2_production,
        effective_cathode_pressure,
        saturation_cathode,
        saturation_anode,
        membrane_temperature,
        water_activity,
        water_content,
        diffusivity_water,
        diffusivity_effective,
        crossover_flux,
        h2_in_o2,
    })
}

/// Squared residuals of the eleven constraints for a candidate state.
///
/// Quantities a candidate cannot carry (stack temperature, pressures, path
/// length) come from `pt`; everything else is read from `candidate`.
pub fn physics_residuals(pt: &OperatingPoint, candidate: &TransportState, p: &PhysicsParams) -> [f64; N_RESIDUALS] {
    let i = pt.current_density;
    let c = candidate;
    let sq = |v: f64| v * v;

    let p_eff = (pt.pressure_cathode * pt.pressure_cathode + p.darcy_coeff * i).sqrt();
    let t_m_k = c.membrane_temperature + CELSIUS_TO_KELVIN;
    let diffusion_length = pt.diffusion_length_cm();

    [
        sq(c.h2_production - i / (2.0 * p.faraday_const)),
        sq(c.o2_production - i / (4.0 * p.faraday_const)),
        sq(c.crossover_flux
            - c.diffusivity_effective * (c.saturation_cathode - c.saturation_anode) / diffusion_length),
        sq(c.saturation_cathode - p.solubility_cathode * p_eff),
        sq(c.saturation_anode - p.solubility_anode * pt.pressure_anode),
        sq(c.membrane_temperature - (pt.temperature_stack + 0.5 * i + 0.1 * i * i)),
        sq(c.water_activity - water_activity(c.membrane_temperature, p)),
        sq(c.water_content - springer(c.water_activity)),
        sq(c.diffusivity_effective - p.porosity_ratio() * c.diffusivity_water),
        sq(c.diffusivity_water
            - p.base_diffusivity * M2_TO_CM2 * (1.0 + p.temp_coeff * (t_m_k - p.ref_temp))),
        sq(c.h2_in_o2 - c.crossover_flux / c.o2_production * 100.0),
    ]
}

/// Mean of the eleven residuals.
pub fn mean_residual(residuals: &[f64; N_RESIDUALS]) -> f64 {
    residuals.iter().sum::<f64>() / N_RESIDUALS as f64
}

/// Least-squares fit of the cathode solubility on labelled points, holding every
/// other constant fixed. X is linear in `solubility_cathode`, so the fit is closed form.
pub fn calibrate_cathode_solubility(points: &[OperatingPoint], p: &PhysicsParams) -> Result<PhysicsParams> {
    let mut num = 0.0;
    let mut den = 0.0;
    for pt in points {
        let Some(label) = pt.h2_concentration else { continue };
        if pt.current_density <= 0.0 {
            continue;
        }
        let s = crossover_concentration(pt, p)?;
        // X = k·(S_ca·P_eff − S_an·P_an)
        let k = s.diffusivity_effective / pt.diffusion_length_cm() / s.o2_production * 100.0;
        let slope = k * s.effective_cathode_pressure;
        let offset = -k * s.saturation_anode;
        num += slope * (label - offset);
        den += slope * slope;
    }
    if den <= 0.0 {
        return Err(Error::Empty("no labelled points with i > 0 to calibrate on".into()));
    }
    let fitted = num / den;
    if !(fitted > 0.0) {
        return Err(Error::domain(format!("calibrated solubility {fitted} is not positive")));
    }
    Ok(PhysicsParams { solubility_cathode: fitted, ..*p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(t: f64, p_ca: f64, p_an: f64, i: f64, thickness: f64) -> OperatingPoint {
        OperatingPoint {
            temperature_stack: t,
            pressure_cathode: p_ca,
            pressure_anode: p_an,
            thickness,
            current_density: i,
            membrane_id: 0,
            compression: 0.0,
            pt_interlayer: false,
            h2_concentration: None,
        }
    }

    #[test]
    fn faraday_examples() {
        let p = PhysicsParams::default();
        let (h2, o2) = faraday_rates(2.0, &p).unwrap();
        assert_relative_eq!(h2, 1.03643e-5, max_relative = 1e-5);
        assert_relative_eq!(o2, 5.18215e-6, max_relative = 1e-5);
        assert_eq!(faraday_rates(0.0, &p).unwrap(), (0.0, 0.0));
        let (h2, o2) = faraday_rates(192_970.0, &p).unwrap();
        assert_eq!((h2, o2), (1.0, 0.5));
        assert!(faraday_rates(-0.1, &p).is_err());
    }

    #[test]
    fn effective_pressure_examples() {
        let p = PhysicsParams::default();
        assert_eq!(effective_cathode_pressure(80.0, 0.0, &p).unwrap(), 80.0);
        assert_relative_eq!(effective_cathode_pressure(0.0, 1.0, &p).unwrap(), 3.1623e-3, max_relative = 1e-4);
        assert_relative_eq!(effective_cathode_pressure(10.0, 1.0, &p).unwrap(), 10.0000005, max_relative = 1e-12);
    }

    #[test]
    fn membrane_temperature_examples() {
        assert_relative_eq!(membrane_temperature(80.0, 2.0).unwrap(), 81.4, epsilon = 1e-12);
        assert_eq!(membrane_temperature(25.0, 0.0).unwrap(), 25.0);
        assert_relative_eq!(membrane_temperature(60.0, 1.0).unwrap(), 60.6, epsilon = 1e-12);
    }

    #[test]
    fn springer_examples() {
        assert_relative_eq!(water_content(1.0).unwrap(), 14.003, epsilon = 1e-12);
        assert_relative_eq!(water_content(0.0).unwrap(), 0.043, epsilon = 1e-15);
        assert_relative_eq!(water_content(0.5).unwrap(), 3.4855, epsilon = 1e-12);
        assert!(water_content(1.01).is_err());
        assert!(water_content(-0.01).is_err());
    }

    #[test]
    fn diffusivity_examples() {
        let p = PhysicsParams::default();
        let (dw, de) = diffusivity(298.0, &p).unwrap();
        assert_relative_eq!(dw, 1.0e-5, max_relative = 1e-12);
        assert_relative_eq!(de, 1.8667e-6, max_relative = 1e-4);
        let (_, de) = diffusivity(308.0, &p).unwrap();
        assert_relative_eq!(de, 2.0533e-6, max_relative = 1e-4);
        assert!(diffusivity(198.0, &p).is_err());
    }

    #[test]
    fn crossover_reference_point() {
        // frozen from an independent evaluation of the chain
        let p = PhysicsParams { solubility_cathode: 1e-6, solubility_anode: 1e-6, ..Default::default() };
        let s = crossover_concentration(&point(25.0, 10.0, 1.0, 1.0, 200.0), &p).unwrap();
        assert_relative_eq!(s.h2_in_o2, 0.032_662_104_014_561_18, max_relative = 1e-12);
        assert_eq!(s.h2_production, 2.0 * s.o2_production);
        assert!(s.effective_cathode_pressure >= 10.0);
    }

    #[test]
    fn equal_pressures_only_convective_term_drives_crossover() {
        let p = PhysicsParams::default();
        let s = crossover_concentration(&point(25.0, 1.0, 1.0, 0.001, 200.0), &p).unwrap();
        assert!(s.h2_in_o2 > 0.0);
        assert!(s.saturation_cathode > s.saturation_anode);
        let no_convection = PhysicsParams { darcy_coeff: f64::MIN_POSITIVE, ..p };
        let s0 = crossover_concentration(&point(25.0, 1.0, 1.0, 0.001, 200.0), &no_convection).unwrap();
        assert!(s0.h2_in_o2.abs() < s.h2_in_o2 * 1e-6);
    }

    #[test]
    fn doubling_pressure_doubles_crossover() {
        let p = PhysicsParams::default();
        let x1 = crossover_concentration(&point(25.0, 10.0, 0.0, 1.0, 200.0), &p).unwrap().h2_in_o2;
        let x2 = crossover_concentration(&point(25.0, 20.0, 0.0, 1.0, 200.0), &p).unwrap().h2_in_o2;
        assert_relative_eq!(x2 / x1, 2.0, max_relative = 1e-3);
    }

    #[test]
    fn zero_current_and_degenerate_path_are_errors() {
        let p = PhysicsParams::default();
        assert!(matches!(
            crossover_concentration(&point(25.0, 10.0, 1.0, 0.0, 200.0), &p),
            Err(Error::UndefinedConcentration(_))
        ));
        let mut pt = point(25.0, 10.0, 1.0, 1.0, 50.0);
        pt.compression = 60.0;
        assert!(matches!(crossover_concentration(&pt, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn residual_examples() {
        let p = PhysicsParams::default();
        let pt = point(60.0, 30.0, 1.0, 1.5, 183.0);
        let s = crossover_concentration(&pt, &p).unwrap();
        let base = physics_residuals(&pt, &s, &p);
        assert!(base.iter().all(|r| *r < 1e-12));

        let bumped = TransportState { h2_production: s.h2_production + 1.0, ..s };
        let r = physics_residuals(&pt, &bumped, &p);
        assert_relative_eq!(r[0], 1.0, max_relative = 1e-9);
        assert_eq!(&r[1..], &base[1..]);

        let cold = TransportState { membrane_temperature: pt.temperature_stack, ..s };
        let r = physics_residuals(&pt, &cold, &p);
        let i = pt.current_density;
        assert_relative_eq!(r[5], (0.5 * i + 0.1 * i * i).powi(2), max_relative = 1e-9);
    }

    #[test]
    fn antoine_activity_is_bounded_and_feeds_springer() {
        let p = PhysicsParams { sat_pressure_model: SatPressureModel::Antoine, ..Default::default() };
        // ≈ 0.0317 bar at 25 °C
        assert_relative_eq!(water_saturation_pressure(25.0), 0.0317, max_relative = 0.01);
        let s = crossover_concentration(&point(60.0, 10.0, 1.0, 1.0, 183.0), &p).unwrap();
        assert!(s.water_activity > 0.0 && s.water_activity < 1.0);
        let r = physics_residuals(&point(60.0, 10.0, 1.0, 1.0, 183.0), &s, &p);
        assert!(r.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn calibration_recovers_solubility() {
        let truth = PhysicsParams { solubility_cathode: 3.7e-6, ..Default::default() };
        let pts: Vec<_> = [(25.0, 10.0, 0.5), (60.0, 30.0, 1.0), (80.0, 50.0, 2.0)]
            .iter()
            .map(|&(t, pc, i)| {
                let mut pt = point(t, pc, 1.0, i, 183.0);
                pt.h2_concentration = Some(crossover_concentration(&pt, &truth).unwrap().h2_in_o2);
                pt
            })
            .collect();
        let fitted = calibrate_cathode_solubility(&pts, &PhysicsParams::default()).unwrap();
        assert_relative_eq!(fitted.solubility_cathode, 3.7e-6, max_relative = 1e-10);
    }

    #[test]
    fn params_parse_from_toml_with_exact_keys() {
        let p: PhysicsParams = toml::from_str(
            "faraday_const = 96485.0\nporosity = 0.28\nsolubility_cathode = 2e-6\nsat_pressure_model = \"antoine\"\n",
        )
        .unwrap();
        assert_eq!(p.solubility_cathode, 2e-6);
        assert_eq!(p.sat_pressure_model, SatPressureModel::Antoine);
        assert_eq!(p.tortuosity, 1.5);
        assert!(toml::from_str::<PhysicsParams>("porosityy = 1.0").is_err());
        assert!(PhysicsParams { porosity: 0.0, ..Default::default() }.validate().is_err());
    }
}
