//! Data, physics and composite training objectives.
//!
//! The network predicts one scalar (% H₂ in O₂), while ten of the eleven
//! physics constraints involve transport intermediates the network never
//! outputs. Those ten are evaluated on the model's own analytic intermediates,
//! which satisfy them identically; the crossover-ratio constraint is evaluated
//! against the network prediction. The physics term therefore reduces to
//! `(1/11)·mean((ŷ − X_model)²)` plus a constant that is zero up to rounding,
//! and `β` blends the measured labels with the transport model as a teacher.

use crate::error::{Error, Result};
use crate::physics::{self, crossover_concentration, OperatingPoint, PhysicsParams, N_RESIDUALS};
use crate::scalar::Scalar;

/// Mean squared error in label units.
pub fn data_loss<T: Scalar>(pred: &[T], label: &[T]) -> Result<T> {
    if pred.len() != label.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", pred.len(), label.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("data loss over zero samples".into()));
    }
    let sse: T = pred.iter().zip(label).map(|(p, y)| (*p - *y) * (*p - *y)).sum();
    Ok(sse / T::of(pred.len() as f64))
}

/// `(1 − β)·L_data + β·L_physics`
pub fn total_loss<T: Scalar>(data: T, physics: T, beta: T) -> T {
    (T::one() - beta) * data + beta * physics
}

/// Transport-model quantities each record contributes to the physics term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsTarget {
    /// Model concentration, %.
    pub h2_in_o2: f64,
    /// Sum of the ten residuals that do not involve the prediction.
    pub fixed_residuals: f64,
}

/// Per-record physics targets; `None` marks records the model cannot evaluate (i = 0).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhysicsTeacher {
    pub targets: Vec<Option<PhysicsTarget>>,
}

impl PhysicsTeacher {
    pub fn new(points: &[OperatingPoint], params: &PhysicsParams) -> Result<Self> {
        let mut skipped = 0;
        let mut targets = Vec::with_capacity(points.len());
        for pt in points {
            match crossover_concentration(pt, params) {
                Ok(state) => {
                    let r = physics::physics_residuals(pt, &state, params);
                    targets.push(Some(PhysicsTarget {
                        h2_in_o2: state.h2_in_o2,
                        fixed_residuals: r[..N_RESIDUALS - 1].iter().sum(),
                    }));
                }
                Err(Error::UndefinedConcentration(_)) => {
                    skipped += 1;
                    targets.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} records with zero current density excluded from the crossover residual");
        }
        Ok(Self { targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Physics loss with its gradient with respect to every prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsLoss {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Batch mean of each residual term.
    pub residual_means: [f64; N_RESIDUALS],
    pub included: usize,
}

/// Physics loss of predictions `pred` (%, physical units) at `points`.
pub fn physics_loss(points: &[OperatingPoint], pred: &[f64], params: &PhysicsParams) -> Result<PhysicsLoss> {
    if points.len() != pred.len() {
        return Err(Error::Shape(format!("{} points vs {} predictions", points.len(), pred.len())));
    }
    let mut residual_means = [0.0; N_RESIDUALS];
    let mut grad = vec![0.0; pred.len()];
    let mut included = 0usize;
    let mut states = Vec::with_capacity(points.len());
    for pt in points {
        match crossover_concentration(pt, params) {
            Ok(s) => {
                included += 1;
                states.push(Some(s));
            }
            Err(Error::UndefinedConcentration(_)) => states.push(None),
            Err(e) => return Err(e),
        }
    }
    if included < points.len() {
        log::warn!("{} records with zero current density excluded from the crossover residual", points.len() - included);
    }
    if included == 0 {
        return Ok(PhysicsLoss { value: 0.0, grad, residual_means, included });
    }
    let n = included as f64;
    for ((pt, state), (y, g)) in points.iter().zip(&states).zip(pred.iter().zip(grad.iter_mut())) {
        let Some(state) = state else { continue };
        let candidate = physics::TransportState { h2_in_o2: *y, ..*state };
        let r = physics::physics_residuals(pt, &candidate, params);
        for (acc, v) in residual_means.iter_mut().zip(r) {
            *acc += v / n;
        }
        *g = 2.0 * (y - state.h2_in_o2) / (N_RESIDUALS as f64 * n);
    }
    let value = residual_means.iter().sum::<f64>() / N_RESIDUALS as f64;
    Ok(PhysicsLoss { value, grad, residual_means, included })
}
