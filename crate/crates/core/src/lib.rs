//! Quadruped motion recovery: a scaled articulated body model fitted to
//! single- or multi-view RGB(-D) sequences by coarse-to-fine optimization,
//! plus a synthetic capture harness and evaluation metrics.

pub mod ad;
pub mod camera;
pub mod error;
pub mod field;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod pipeline;
pub mod real;
pub mod synth;

pub use error::{Error, Result};
pub use real::Real;

/// Posed mesh in double precision.
pub type PosedMesh64 = model::PosedMesh<f64>;
/// Posed mesh in single precision.
pub type PosedMeshF32 = model::PosedMesh<f32>;
/// Posed mesh whose coordinates are recorded on the gradient tape.
pub type DualMesh = model::PosedMesh<ad::Var>;
