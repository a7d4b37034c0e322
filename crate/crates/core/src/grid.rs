//! Background grid, grid-sampled fields and quadratic B-spline stencils.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::V2;
use crate::real::Real;

/// Node velocity is defined only where node mass exceeds this.
pub const MASS_EPSILON: f64 = 1e-10;

/// Ghost cells added on every side of the simulated domain.
pub const GHOST_CELLS: usize = 2;

/// Geometry of a node lattice. Node `(i, j)` sits at
/// `origin + (i·dx, j·dx)` in pixel coordinates; storage is row-major
/// (`j * nx + i`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub origin: V2<f64>,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, origin: V2<f64>) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::DimensionTooSmall { nx, ny, min: 4 });
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Invalid(format!("cell size must be positive, got {dx}")));
        }
        Ok(GridSpec { nx, ny, dx, origin })
    }

    /// A grid covering `[0, width] × [0, height]` plus ghost padding.
    pub fn covering(width: f64, height: f64, dx: f64) -> Result<Self> {
        let pad = GHOST_CELLS as f64 * dx;
        let nx = (width / dx).ceil() as usize + 2 * GHOST_CELLS + 1;
        let ny = (height / dx).ceil() as usize + 2 * GHOST_CELLS + 1;
        GridSpec::new(nx, ny, dx, V2::new(-pad, -pad))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node_pos(&self, i: usize, j: usize) -> V2<f64> {
        V2::new(self.origin.x + i as f64 * self.dx, self.origin.y + j as f64 * self.dx)
    }

    /// Pixel-space extent of the nodes whose full stencil fits.
    pub fn interior_bounds(&self) -> (V2<f64>, V2<f64>) {
        let lo = V2::new(self.origin.x + 0.5 * self.dx, self.origin.y + 0.5 * self.dx);
        let hi =
            V2::new(self.origin.x + (self.nx as f64 - 1.5) * self.dx, self.origin.y + (self.ny as f64 - 1.5) * self.dx);
        (lo, hi)
    }

    /// Sub-lattice of nodes `[i0, i1) × [j0, j1)`.
    pub fn window(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> GridSpec {
        GridSpec { nx: i1 - i0, ny: j1 - j0, dx: self.dx, origin: self.node_pos(i0, j0) }
    }
}

/// Quadratic B-spline kernel.
#[inline]
pub fn bspline_quadratic(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        0.75 - a * a
    } else if a < 1.5 {
        let r = 1.5 - a;
        0.5 * r * r
    } else {
        0.0
    }
}

/// Derivative of [`bspline_quadratic`].
#[inline]
pub fn bspline_quadratic_deriv(t: f64) -> f64 {
    let a = t.abs();
    let s = t.signum();
    if a <= 0.5 {
        -2.0 * t
    } else if a < 1.5 {
        -(1.5 - a) * s
    } else {
        0.0
    }
}

/// The 3×3 tensor-product kernel around one particle. Entry `[a][b]` refers
/// to node `(base[0] + a, base[1] + b)`.
#[derive(Clone, Copy, Debug)]
pub struct KernelStencil<T> {
    pub base: [usize; 2],
    pub weights: [[T; 3]; 3],
    /// `x_i − x_p` for each stencil node.
    pub offsets: [[V2<T>; 3]; 3],
    /// Weight gradients `(4/Δx²)·w_ip·(x_i − x_p)`.
    pub weight_gradients: [[V2<T>; 3]; 3],
}

impl<T: Real> KernelStencil<T> {
    #[inline]
    pub fn node(&self, spec: &GridSpec, a: usize, b: usize) -> usize {
        spec.index(self.base[0] + a, self.base[1] + b)
    }

    /// Iterates `(node index, weight, x_i − x_p)` over the stencil.
    pub fn iter<'a>(&'a self, spec: &'a GridSpec) -> impl Iterator<Item = (usize, T, V2<T>)> + 'a {
        (0..3).flat_map(move |b| (0..3).map(move |a| (self.node(spec, a, b), self.weights[a][b], self.offsets[a][b])))
    }
}

#[inline]
fn axis_weights<T: Real>(fx: T) -> [T; 3] {
    let a = fx * -1.0 + 1.5;
    let b = fx - 1.0;
    let c = fx - 0.5;
    [a * a * 0.5, b * b * -1.0 + 0.75, c * c * 0.5]
}

/// Builds the kernel stencil for a particle at `x_p` (pixels).
pub fn stencil_for<T: Real>(x_p: V2<T>, spec: &GridSpec) -> Result<KernelStencil<T>> {
    stencil_impl(x_p, spec, usize::MAX)
}

pub(crate) fn stencil_impl<T: Real>(x_p: V2<T>, spec: &GridSpec, particle: usize) -> Result<KernelStencil<T>> {
    let inv_dx = 1.0 / spec.dx;
    let gx = (x_p.x - spec.origin.x) * inv_dx;
    let gy = (x_p.y - spec.origin.y) * inv_dx;
    let bx = (gx.val() - 0.5).floor();
    let by = (gy.val() - 0.5).floor();
    if !(bx >= 0.0 && by >= 0.0 && bx + 2.0 < spec.nx as f64 && by + 2.0 < spec.ny as f64) {
        return Err(Error::OutOfDomain { particle, x: x_p.x.val(), y: x_p.y.val() });
    }
    let fx = gx - bx;
    let fy = gy - by;
    let wx = axis_weights(fx);
    let wy = axis_weights(fy);
    let grad_scale = 4.0 * inv_dx * inv_dx;
    let mut weights = [[T::zero(); 3]; 3];
    let mut offsets = [[V2::zero(); 3]; 3];
    let mut weight_gradients = [[V2::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let w = wx[a] * wy[b];
            let off = V2::new((fx - a as f64) * -spec.dx, (fy - b as f64) * -spec.dx);
            weights[a][b] = w;
            offsets[a][b] = off;
            weight_gradients[a][b] = off.scale(w * grad_scale);
        }
    }
    Ok(KernelStencil { base: [bx as usize, by as usize], weights, offsets, weight_gradients })
}

/// Exact gradient of each stencil node's basis function, `∇N_i(x_p)`,
/// for validating the affine approximation stored in the stencil.
pub fn exact_weight_gradients(x_p: V2<f64>, spec: &GridSpec) -> Result<[[V2<f64>; 3]; 3]> {
    let st = stencil_for(x_p, spec)?;
    let mut out = [[V2::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let t = -st.offsets[a][b].x / spec.dx;
            let s = -st.offsets[a][b].y / spec.dx;
            out[a][b] = V2::new(
                bspline_quadratic_deriv(t) * bspline_quadratic(s) / spec.dx,
                bspline_quadratic(t) * bspline_quadratic_deriv(s) / spec.dx,
            );
        }
    }
    Ok(out)
}

/// Eulerian accumulators.
#[derive(Clone, Debug)]
pub struct Grid<T> {
    pub spec: GridSpec,
    pub mass: Vec<T>,
    pub momentum: Vec<V2<T>>,
    pub velocity: Vec<V2<T>>,
    pub force: Vec<V2<T>>,
}

impl<T: Real> Grid<T> {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.len();
        Grid {
            spec,
            mass: vec![T::zero(); n],
            momentum: vec![V2::zero(); n],
            velocity: vec![V2::zero(); n],
            force: vec![V2::zero(); n],
        }
    }

    pub fn clear(&mut self) {
        self.mass.fill(T::zero());
        self.momentum.fill(V2::zero());
        self.velocity.fill(V2::zero());
        self.force.fill(V2::zero());
    }

    /// Sets `velocity = momentum / mass` where mass is above
    /// [`MASS_EPSILON`], zero elsewhere.
    pub fn resolve_velocity(&mut self) {
        for ((v, p), m) in self.velocity.iter_mut().zip(&self.momentum).zip(&self.mass) {
            *v = if m.val() > MASS_EPSILON { V2::new(p.x / *m, p.y / *m) } else { V2::zero() };
        }
    }

    pub fn velocity_field(&self) -> VectorField<T> {
        VectorField { spec: self.spec, values: self.velocity.clone() }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().map(|m| m.val()).sum()
    }

    pub fn total_momentum(&self) -> V2<f64> {
        self.momentum.iter().fold(V2::zero(), |acc, p| acc + p.val())
    }
}

/// A 2-vector per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    pub spec: GridSpec,
    pub values: Vec<V2<T>>,
}

/// A scalar per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    pub spec: GridSpec,
    pub values: Vec<T>,
}

impl<T: Real> VectorField<T> {
    pub fn zeros(spec: GridSpec) -> Self {
        VectorField { spec, values: vec![V2::zero(); spec.len()] }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(V2<f64>) -> V2<T>) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                values.push(f(spec.node_pos(i, j)));
            }
        }
        VectorField { spec, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> V2<T> {
        self.values[self.spec.index(i, j)]
    }

    /// Interpolates the field at a point with the B-spline kernel.
    pub fn sample(&self, st: &KernelStencil<T>) -> V2<T> {
        let mut acc = V2::zero();
        for (node, w, _) in st.iter(&self.spec) {
            acc += self.values[node].scale(w);
        }
        acc
    }

    pub fn window(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> VectorField<T> {
        let spec = self.spec.window(i0, j0, i1, j1);
        let mut values = Vec::with_capacity(spec.len());
        for j in j0..j1 {
            values.extend_from_slice(&self.values[self.spec.index(i0, j)..self.spec.index(i1, j)]);
        }
        VectorField { spec, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn val(&self) -> VectorField<f64> {
        VectorField { spec: self.spec, values: self.values.iter().map(|v| v.val()).collect() }
    }

    pub fn map(&self, f: impl Fn(V2<T>) -> V2<T>) -> VectorField<T> {
        VectorField { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

impl VectorField<f64> {
    pub fn lift<T: Real>(&self) -> VectorField<T> {
        VectorField { spec: self.spec, values: self.values.iter().map(|v| v.lift()).collect() }
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &VectorField<f64>, b: f64) -> VectorField<f64> {
        assert_eq!(self.spec, other.spec);
        VectorField {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(u, v)| u.scale(a) + v.scale(b)).collect(),
        }
    }
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField { spec, values: vec![T::zero(); spec.len()] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.spec.index(i, j)]
    }

    pub fn val(&self) -> ScalarField<f64> {
        ScalarField { spec: self.spec, values: self.values.iter().map(|v| v.val()).collect() }
    }
}

impl ScalarField<f64> {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::covering(32.0, 32.0, 1.0).unwrap()
    }

    #[test]
    fn bspline_values() {
        assert_eq!(bspline_quadratic(0.0), 0.75);
        assert_eq!(bspline_quadratic(1.0), 0.125);
        assert_eq!(bspline_quadratic(1.5), 0.0);
        assert_eq!(bspline_quadratic(-1.0), 0.125);
        // C¹ at the knot.
        let k = 0.5;
        assert!((bspline_quadratic(k - 1e-9) - bspline_quadratic(k + 1e-9)).abs() < 1e-8);
        assert!((bspline_quadratic_deriv(k - 1e-9) - bspline_quadratic_deriv(k + 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn stencil_on_node() {
        let s = spec();
        let st = stencil_for(V2::new(10.0, 7.0), &s).unwrap();
        let center = st.weights[1][1];
        assert_eq!(center, 0.5625);
        let sum: f64 = st.weights.iter().flatten().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let mut first = V2::new(0.0, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                first += st.offsets[a][b].scale(st.weights[a][b]);
            }
        }
        assert!(first.x.abs() < 1e-15 && first.y.abs() < 1e-15);
        assert_eq!(s.node_pos(st.base[0] + 1, st.base[1] + 1), V2::new(10.0, 7.0));
    }

    #[test]
    fn stencil_matches_kernel_definition() {
        let s = spec();
        let xp = V2::new(5.3, 9.81);
        let st = stencil_for(xp, &s).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let xi = s.node_pos(st.base[0] + a, st.base[1] + b);
                let w = bspline_quadratic((xi.x - xp.x) / s.dx) * bspline_quadratic((xi.y - xp.y) / s.dx);
                assert!((st.weights[a][b] - w).abs() < 1e-14);
                assert!(((xi - xp) - st.offsets[a][b]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn out_of_domain() {
        let s = spec();
        assert!(matches!(stencil_for(V2::new(-2.0, 3.0), &s), Err(Error::OutOfDomain { .. })));
        assert!(matches!(stencil_for(V2::new(3.0, 200.0), &s), Err(Error::OutOfDomain { .. })));
        // Domain corners keep a full stencil thanks to the ghost padding.
        assert!(stencil_for(V2::new(0.0, 0.0), &s).is_ok());
        assert!(stencil_for(V2::new(32.0, 32.0), &s).is_ok());
    }

    #[test]
    fn exact_gradient_close_to_affine_near_center() {
        let s = spec();
        let xp = V2::new(10.0, 10.0);
        let st = stencil_for(xp, &s).unwrap();
        let exact = exact_weight_gradients(xp, &s).unwrap();
        // Both vanish at the centre node and agree in sign elsewhere.
        assert!(exact[1][1].norm() < 1e-15 && st.weight_gradients[1][1].norm() < 1e-15);
        for a in 0..3 {
            for b in 0..3 {
                assert!(exact[a][b].dot(st.weight_gradients[a][b]) >= 0.0);
            }
        }
    }

    #[test]
    fn window_keeps_positions() {
        let s = spec();
        let f = VectorField::from_fn(s, |p| p);
        let w = f.window(3, 4, 10, 12);
        assert_eq!(w.spec.nx, 7);
        assert_eq!(w.spec.ny, 8);
        for j in 0..w.spec.ny {
            for i in 0..w.spec.nx {
                assert_eq!(w.at(i, j), w.spec.node_pos(i, j));
            }
        }
    }
}
