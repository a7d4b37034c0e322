//! Differentiable material point method for dense crowds.
//!
//! Particles carry mass, velocity, an affine velocity gradient and a
//! deformation gradient; a background grid resolves momentum. Node forces
//! combine a crowd-material stress, Toner-Tu active forcing and optional
//! body forces. Every numeric routine is generic over [`Real`] so the same
//! stepper runs on plain `f64` or on a reverse-mode tape for learning.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod autodiff;
pub mod error;
pub mod field_io;
pub mod flow;
pub mod forces;
pub mod geometry;
pub mod grid;
pub mod learn;
pub mod linalg;
pub mod material;
pub mod mpm;
pub mod neighbors;
pub mod ops;
pub mod params;
pub mod real;
pub mod scenario;
pub mod snapshot;

pub use error::{Error, FieldError, Result};
pub use forces::{ActiveParams, BodyForceConfig};
pub use geometry::{Exit, Geometry, Wall};
pub use grid::{Grid, GridSpec, KernelStencil, ScalarField, VectorField};
pub use linalg::{M2, V2};
pub use mpm::{Particle, Simulation, State, StepConfig, StepDiagnostics};
pub use params::{FixedParams, ParamSource};
pub use real::Real;
pub use scenario::Scenario;
