//! Per-step material and active-force coefficients, supplied to the
//! stepper by a [`ParamSource`].

use crate::error::Result;
use crate::forces::{ActiveCoefficients, ActiveParams};
use crate::mpm::Particle;
use crate::neighbors::NeighborTable;
use crate::real::Real;

/// Coefficients for one step: per-particle `ε` and `k`, and the global
/// active-force coefficients.
#[derive(Clone, Debug)]
pub struct Resolved<T> {
    pub eps: Vec<T>,
    pub k: Vec<T>,
    pub active: ActiveCoefficients<T>,
    pub noise_seed: u64,
}

pub trait ParamSource<T: Real> {
    fn resolve(&self, particles: &[Particle<T>], neighbors: &NeighborTable) -> Result<Resolved<T>>;
}

/// Constant, non-learnable coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedParams {
    pub eps: f64,
    pub k: f64,
    pub active: ActiveParams,
}

impl FixedParams {
    pub fn new(eps: f64, k: f64, active: ActiveParams) -> Self {
        FixedParams { eps, k, active }
    }

    /// No stress, no active force.
    pub fn inert() -> Self {
        FixedParams { eps: 0.0, k: 0.0, active: ActiveParams::default() }
    }
}

impl<T: Real> ParamSource<T> for FixedParams {
    fn resolve(&self, particles: &[Particle<T>], _: &NeighborTable) -> Result<Resolved<T>> {
        let n = particles.len();
        Ok(Resolved {
            eps: vec![T::cst(self.eps); n],
            k: vec![T::cst(self.k); n],
            active: self.active.coefficients(),
            noise_seed: self.active.seed,
        })
    }
}
