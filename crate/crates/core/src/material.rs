//! Crowd-material stress: weakly compressible Cauchy stress, logarithmic
//! resistance inside the comfort band, and compression-dominant traction
//! cancellation.

use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, KernelStencil};
use crate::linalg::V2;
use crate::mpm::{scatter, Particle};
use crate::neighbors::{self, NeighborTable};
use crate::real::Real;

/// Floor on the normalized pair distance inside the logarithm.
pub const D_FLOOR: f64 = 1e-3;

/// How the traction along a compressed pair enters the node force.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TractionMode {
    /// `f_r − f_t`: only the logarithmic resistance remains.
    #[default]
    Cancel,
    /// Keeps the traction term, for comparison.
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialOptions {
    pub traction: TractionMode,
    /// Admissible range of `det F`.
    pub det_range: (f64, f64),
}

impl Default for MaterialOptions {
    fn default() -> Self {
        MaterialOptions { traction: TractionMode::Cancel, det_range: (0.05, 20.0) }
    }
}

/// Isotropic stress coefficient `g` with `G_p = g·I`:
/// `g = −(4/Δx²)·ε·V0·(J − 1)`.
#[inline]
pub fn cauchy_coefficient<T: Real>(j: T, eps: T, v0: f64, dx: f64) -> T {
    eps * (j - 1.0) * (-4.0 * v0 / (dx * dx))
}

/// `G_p` as a full matrix.
pub fn cauchy_tensor_gp<T: Real>(p: &Particle<T>, eps: T, dx: f64) -> crate::linalg::M2<T> {
    crate::linalg::M2::<T>::identity().scale(cauchy_coefficient(p.j(), eps, p.v0, dx))
}

/// `⟨G·(x_i − x_p), e⟩·e` for isotropic `G = g·I`.
#[inline]
pub fn traction_projection<T: Real>(g: T, offset: V2<T>, e: V2<T>) -> V2<T> {
    e.scale(offset.dot(e) * g)
}

/// Pair geometry for `p` and its neighbor `q`: the unit direction from `q`
/// to `p` and the normalized gap `d = (|x_p − x_q| − 2r_a)/d_c`, with radii
/// averaged over the pair.
#[inline]
pub fn pair_geometry<T: Real>(p: &Particle<T>, q: &Particle<T>) -> (V2<T>, T) {
    let r_a = 0.5 * (p.r_a + q.r_a);
    let r_b = 0.5 * (p.r_b + q.r_b);
    let d_c = 2.0 * (r_b - r_a);
    let diff = p.x - q.x;
    let dist = diff.norm2().sqrt();
    let e = V2::new(diff.x / dist, diff.y / dist);
    (e, (dist - 2.0 * r_a) / d_c)
}

/// Logarithmic resistance on `p` from `q`: `−k·log(max(d, d_floor))·e_qp`
/// inside the comfort band, zero beyond it. The flag reports overlap.
pub fn repulsive_force<T: Real>(p: &Particle<T>, q: &Particle<T>, k: T) -> (V2<T>, bool) {
    let (e, d) = pair_geometry(p, q);
    let dv = d.val();
    if dv >= 1.0 {
        return (V2::zero(), false);
    }
    let overlap = dv <= 0.0;
    let logd = if dv < D_FLOOR { T::cst(D_FLOOR.ln()) } else { d.ln() };
    (e.scale(-(k * logd)), overlap)
}

/// Same as [`repulsive_force`] for a bare normalized gap.
pub fn repulsive_magnitude(d: f64, k: f64) -> f64 {
    if d >= 1.0 {
        0.0
    } else {
        -k * d.max(D_FLOOR).ln()
    }
}

/// Neighbor search radius for a pair: `2r_a + d_c = 2r_b` with averaged
/// radii.
pub fn build_neighbors<T: Real>(particles: &[Particle<T>]) -> NeighborTable {
    let pos: Vec<V2<f64>> = particles.iter().map(|p| p.x.val()).collect();
    let max_rb = particles.iter().fold(0.0f64, |m, p| m.max(p.r_b));
    neighbors::build_with(&pos, 2.0 * max_rb, |i, j| particles[i].r_b + particles[j].r_b)
}

/// Per-particle sums of the pair resistance, plus the number of
/// overlapping pairs.
pub fn pair_forces<T: Real>(particles: &[Particle<T>], neighbors: &NeighborTable, k: &[T]) -> (Vec<V2<T>>, usize) {
    let mut overlaps = 0;
    let forces = particles
        .iter()
        .enumerate()
        .map(|(p, part)| {
            let mut acc = V2::zero();
            for &q in neighbors.of(p) {
                let (f, over) = repulsive_force(part, &particles[q], k[p]);
                if over && q > p {
                    overlaps += 1;
                }
                acc += f;
            }
            acc
        })
        .collect();
    (forces, overlaps)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StressDiagnostics {
    pub overlaps: usize,
}

/// Node forces `f_i = Σ_p w_ip·{G_p(x_i − x_p) + Σ_q (f_r − f_t)}`.
#[allow(clippy::too_many_arguments)]
pub fn stress_force<T: Real>(
    particles: &[Particle<T>],
    stencils: &[KernelStencil<T>],
    neighbors: &NeighborTable,
    eps: &[T],
    k: &[T],
    spec: &GridSpec,
    opts: &MaterialOptions,
    deterministic: bool,
) -> (Vec<V2<T>>, StressDiagnostics) {
    let g: Vec<T> = particles.iter().zip(eps).map(|(p, &e)| cauchy_coefficient(p.j(), e, p.v0, spec.dx)).collect();
    let (pair, overlaps) = pair_forces(particles, neighbors, k);
    let keep_dirs: Vec<Vec<V2<T>>> = if opts.traction == TractionMode::Keep {
        particles
            .iter()
            .enumerate()
            .map(|(p, part)| {
                neighbors
                    .of(p)
                    .iter()
                    .filter_map(|&q| {
                        let (e, d) = pair_geometry(part, &particles[q]);
                        (d.val() < 1.0).then_some(e)
                    })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let out = scatter(spec, stencils, deterministic, |p, a, b| {
        let w = stencils[p].weights[a][b];
        let off = stencils[p].offsets[a][b];
        let mut f = off.scale(g[p]) + pair[p];
        if let Some(dirs) = keep_dirs.get(p) {
            for &e in dirs {
                f += traction_projection(g[p], off, e);
            }
        }
        [f.x * w, f.y * w]
    });
    (out.into_iter().map(|[x, y]| V2::new(x, y)).collect(), StressDiagnostics { overlaps })
}
