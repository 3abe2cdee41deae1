//! Physics-informed neural network toolkit for hydrogen crossover prediction
//! in PEM electrolyzers.
//!
//! The transport model in [`physics`] serves three roles: it supplies the
//! physics term of the training objective, it acts as an independent oracle in
//! tests, and it is the physics partner of the inference-time fusion.
//!
//! The network stack ([`nn`], [`train`], [`uncertainty`]) is generic over the
//! floating-point type through [`Scalar`]; the aliases below fix it to `f64`,
//! which is what training uses. The physics chain always runs in `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops mirror
// the matrix algebra they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod inference;
pub mod nn;
pub mod physics;
pub mod scalar;
pub mod synth;
pub mod train;
pub mod uncertainty;

pub use error::{Error, Result};
pub use physics::{OperatingPoint, PhysicsParams, TransportState};
pub use scalar::Scalar;

pub type Mlp64 = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
