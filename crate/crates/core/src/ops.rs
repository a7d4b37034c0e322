//! Finite-difference operators on grid fields.
//!
//! First derivatives use central differences on interior nodes and
//! first-order one-sided differences on the outermost nodes. The
//! directional derivative `(v·∇)` is upwinded on the sign of the local
//! advecting velocity.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::linalg::V2;
use crate::real::Real;

fn check(spec: &GridSpec, min: usize) -> Result<()> {
    if spec.nx < min || spec.ny < min {
        Err(Error::DimensionTooSmall { nx: spec.nx, ny: spec.ny, min })
    } else {
        Ok(())
    }
}

/// ∂f/∂x at node `(i, j)` of a scalar lattice stored row-major.
#[inline]
fn ddx<T: Real>(f: &[T], s: &GridSpec, i: usize, j: usize) -> T {
    let k = s.index(i, j);
    if i == 0 {
        (f[k + 1] - f[k]) / s.dx
    } else if i == s.nx - 1 {
        (f[k] - f[k - 1]) / s.dx
    } else {
        (f[k + 1] - f[k - 1]) / (2.0 * s.dx)
    }
}

#[inline]
fn ddy<T: Real>(f: &[T], s: &GridSpec, i: usize, j: usize) -> T {
    let k = s.index(i, j);
    let nx = s.nx;
    if j == 0 {
        (f[k + nx] - f[k]) / s.dx
    } else if j == s.ny - 1 {
        (f[k] - f[k - nx]) / s.dx
    } else {
        (f[k + nx] - f[k - nx]) / (2.0 * s.dx)
    }
}

#[inline]
fn d2dx2<T: Real>(f: &[T], s: &GridSpec, i: usize, j: usize) -> T {
    let h2 = s.dx * s.dx;
    let c = i.clamp(1, s.nx - 2);
    let k = s.index(c, j);
    (f[k + 1] + f[k - 1] - f[k] * 2.0) / h2
}

#[inline]
fn d2dy2<T: Real>(f: &[T], s: &GridSpec, i: usize, j: usize) -> T {
    let h2 = s.dx * s.dx;
    let c = j.clamp(1, s.ny - 2);
    let k = s.index(i, c);
    (f[k + s.nx] + f[k - s.nx] - f[k] * 2.0) / h2
}

/// Upwinded ∂f/∂x, picking the side the flow comes from.
#[inline]
fn ddx_up<T: Real>(f: &[T], s: &GridSpec, i: usize, j: usize, vel: f64) -> T {
    let k = s.index(i, j);
    let backward = if i == 0 {
        false
    } else if i == s.nx - 1 {
        true
    } else {
        vel > 0.0
    };
    if backward {
        (f[k] - f[k - 1]) / s.dx
    } else {
        (f[k + 1] - f[k]) / s.dx
    }
}

#[inline]
fn ddy_up<T: Real>(f: &[T], s: &GridSpec, i: usize, j: usize, vel: f64) -> T {
    let k = s.index(i, j);
    let backward = if j == 0 {
        false
    } else if j == s.ny - 1 {
        true
    } else {
        vel > 0.0
    };
    if backward {
        (f[k] - f[k - s.nx]) / s.dx
    } else {
        (f[k + s.nx] - f[k]) / s.dx
    }
}

fn split<T: Real>(f: &VectorField<T>) -> (Vec<T>, Vec<T>) {
    (f.values.iter().map(|v| v.x).collect(), f.values.iter().map(|v| v.y).collect())
}

fn for_nodes<R>(s: &GridSpec, mut f: impl FnMut(usize, usize) -> R) -> Vec<R> {
    let mut out = Vec::with_capacity(s.len());
    for j in 0..s.ny {
        for i in 0..s.nx {
            out.push(f(i, j));
        }
    }
    out
}

/// ∂v_x/∂x + ∂v_y/∂y.
pub fn divergence<T: Real>(f: &VectorField<T>) -> Result<ScalarField<T>> {
    let s = f.spec;
    check(&s, 3)?;
    let (vx, vy) = split(f);
    let values = for_nodes(&s, |i, j| ddx(&vx, &s, i, j) + ddy(&vy, &s, i, j));
    Ok(ScalarField { spec: s, values })
}

/// ∂v_y/∂x − ∂v_x/∂y.
pub fn curl<T: Real>(f: &VectorField<T>) -> Result<ScalarField<T>> {
    let s = f.spec;
    check(&s, 3)?;
    let (vx, vy) = split(f);
    let values = for_nodes(&s, |i, j| ddx(&vy, &s, i, j) - ddy(&vx, &s, i, j));
    Ok(ScalarField { spec: s, values })
}

/// Central-difference gradient of a scalar field.
pub fn gradient<T: Real>(f: &ScalarField<T>) -> Result<VectorField<T>> {
    let s = f.spec;
    check(&s, 3)?;
    let values = for_nodes(&s, |i, j| V2::new(ddx(&f.values, &s, i, j), ddy(&f.values, &s, i, j)));
    Ok(VectorField { spec: s, values })
}

/// Component-wise 5-point Laplacian.
pub fn laplacian<T: Real>(f: &VectorField<T>) -> Result<VectorField<T>> {
    let s = f.spec;
    check(&s, 5)?;
    let (vx, vy) = split(f);
    let values = for_nodes(&s, |i, j| {
        V2::new(d2dx2(&vx, &s, i, j) + d2dy2(&vx, &s, i, j), d2dx2(&vy, &s, i, j) + d2dy2(&vy, &s, i, j))
    });
    Ok(VectorField { spec: s, values })
}

/// ∇(∇·v).
pub fn grad_div<T: Real>(f: &VectorField<T>) -> Result<VectorField<T>> {
    check(&f.spec, 5)?;
    gradient(&divergence(f)?)
}

/// `(a·∇)u` with first-order upwinding on the sign of `a`.
pub fn advect<T: Real>(a: &VectorField<T>, u: &VectorField<T>) -> Result<VectorField<T>> {
    let s = u.spec;
    check(&s, 3)?;
    if a.spec != s {
        return Err(Error::DimMismatch("advecting field and advected field differ".into()));
    }
    let (ux, uy) = split(u);
    let values = for_nodes(&s, |i, j| {
        let v = a.at(i, j);
        let (vx, vy) = (v.x.val(), v.y.val());
        V2::new(
            v.x * ddx_up(&ux, &s, i, j, vx) + v.y * ddy_up(&ux, &s, i, j, vy),
            v.x * ddx_up(&uy, &s, i, j, vx) + v.y * ddy_up(&uy, &s, i, j, vy),
        )
    });
    Ok(VectorField { spec: s, values })
}

/// `(v·∇)²v`: the upwinded directional derivative applied twice.
pub fn advective_squared<T: Real>(f: &VectorField<T>) -> Result<VectorField<T>> {
    check(&f.spec, 5)?;
    let once = advect(f, f)?;
    advect(f, &once)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n, n, 1.0, V2::new(0.0, 0.0)).unwrap()
    }

    fn interior<T: Copy>(f: &[T], s: &GridSpec, margin: usize) -> Vec<T> {
        let mut out = Vec::new();
        for j in margin..s.ny - margin {
            for i in margin..s.nx - margin {
                out.push(f[s.index(i, j)]);
            }
        }
        out
    }

    #[test]
    fn radial_and_rotational_fields() {
        let s = spec(16);
        let radial = VectorField::from_fn(s, |p| p);
        let div = divergence(&radial).unwrap();
        let cu = curl(&radial).unwrap();
        // Exact everywhere for linear fields, including one-sided edges.
        assert!(div.values.iter().all(|d| (d - 2.0).abs() < 1e-10));
        assert!(cu.values.iter().all(|c| c.abs() < 1e-10));

        let rot = VectorField::from_fn(s, |p| V2::new(-p.y, p.x));
        assert!(curl(&rot).unwrap().values.iter().all(|c| (c - 2.0).abs() < 1e-10));
        assert!(divergence(&rot).unwrap().values.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn constant_field_is_annihilated() {
        let s = spec(12);
        let c = VectorField::from_fn(s, |_| V2::new(3.0, -1.0));
        assert!(curl(&c).unwrap().values.iter().all(|v| *v == 0.0));
        assert!(divergence(&c).unwrap().values.iter().all(|v| *v == 0.0));
        for out in [laplacian(&c).unwrap(), grad_div(&c).unwrap(), advective_squared(&c).unwrap()] {
            assert!(out.values.iter().all(|v| v.x == 0.0 && v.y == 0.0));
        }
    }

    #[test]
    fn laplacian_of_quadratic() {
        let s = spec(10);
        let f = VectorField::from_fn(s, |p| V2::new(p.x * p.x, 0.0));
        let l = laplacian(&f).unwrap();
        for v in interior(&l.values, &s, 1) {
            assert!((v.x - 2.0).abs() < 1e-10 && v.y.abs() < 1e-10);
        }
    }

    #[test]
    fn grad_div_of_linear_shear_vanishes() {
        let s = spec(10);
        let f = VectorField::from_fn(s, |p| V2::new(p.x, 0.0));
        for v in interior(&grad_div(&f).unwrap().values, &s, 1) {
            assert!(v.x.abs() < 1e-10 && v.y.abs() < 1e-10);
        }
        let g = VectorField::from_fn(s, |p| V2::new(p.x * p.x, p.x * p.y));
        // div = 3x, grad div = (3, 0)
        for v in interior(&grad_div(&g).unwrap().values, &s, 2) {
            assert!((v.x - 3.0).abs() < 1e-10 && v.y.abs() < 1e-10);
        }
    }

    #[test]
    fn advective_squared_of_shear_is_zero() {
        let s = spec(10);
        let f = VectorField::from_fn(s, |p| V2::new(p.y, 0.0));
        let a = advective_squared(&f).unwrap();
        assert!(a.values.iter().all(|v| v.x == 0.0 && v.y == 0.0));
    }

    #[test]
    fn advection_of_linear_field() {
        let s = spec(10);
        let f = VectorField::from_fn(s, |p| V2::new(p.x - 4.5, 0.0));
        // (v·∇)v = (x-4.5)·1 exactly under upwinding; applied twice gives (x-4.5).
        let a = advective_squared(&f).unwrap();
        for j in 0..s.ny {
            for i in 0..s.nx {
                let x = s.node_pos(i, j).x - 4.5;
                assert!((a.at(i, j).x - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_small() {
        let s = GridSpec::new(4, 4, 1.0, V2::new(0.0, 0.0)).unwrap();
        let f = VectorField::<f64>::zeros(s);
        assert!(divergence(&f).is_ok());
        assert!(matches!(laplacian(&f), Err(Error::DimensionTooSmall { .. })));
        assert!(matches!(advective_squared(&f), Err(Error::DimensionTooSmall { .. })));
    }
}
