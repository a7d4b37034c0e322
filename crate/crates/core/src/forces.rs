//! Active (Toner-Tu) and body forces as per-node force fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, KernelStencil, VectorField};
use crate::linalg::V2;
use crate::mpm::{scatter_weighted, Particle};
use crate::ops;
use crate::real::Real;

/// Nodes kept around the particle bounding box when evaluating the
/// derivative feature fields on a sub-window.
const WINDOW_MARGIN: usize = 5;

/// Active-force coefficients as they appear in scenario and config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActiveParams {
    pub alpha: f64,
    pub beta: f64,
    pub d_l: f64,
    pub d1: f64,
    pub d2: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ActiveParams {
    pub fn coefficients<T: Real>(&self) -> ActiveCoefficients<T> {
        ActiveCoefficients {
            alpha: T::cst(self.alpha),
            beta: T::cst(self.beta),
            d_l: T::cst(self.d_l),
            d1: T::cst(self.d1),
            d2: T::cst(self.d2),
            noise_sigma: T::cst(self.noise_sigma),
        }
    }
}

/// Resolved coefficients used by [`active_force`].
#[derive(Clone, Copy, Debug)]
pub struct ActiveCoefficients<T> {
    pub alpha: T,
    pub beta: T,
    pub d_l: T,
    pub d1: T,
    pub d2: T,
    pub noise_sigma: T,
}

impl<T: Real> ActiveCoefficients<T> {
    fn is_zero(&self) -> bool {
        [self.alpha, self.beta, self.d_l, self.d1, self.d2, self.noise_sigma].iter().all(|c| c.val() == 0.0)
    }
}

/// The four Toner-Tu feature fields.
#[derive(Clone, Debug)]
pub struct TtFeatures<T> {
    /// `|v|²·v`
    pub cubic: VectorField<T>,
    /// `∇(∇·v)`
    pub grad_div: VectorField<T>,
    /// `∇²v`
    pub laplacian: VectorField<T>,
    /// `(v·∇)²v`
    pub advective: VectorField<T>,
}

pub fn tt_feature_fields<T: Real>(v: &VectorField<T>) -> Result<TtFeatures<T>> {
    if !v.is_finite() {
        return Err(Error::NonFiniteField { what: "velocity" });
    }
    Ok(TtFeatures {
        cubic: v.map(|u| u.scale(u.norm2())),
        grad_div: ops::grad_div(v)?,
        laplacian: ops::laplacian(v)?,
        advective: ops::advective_squared(v)?,
    })
}

/// Node window covering every stencil plus a margin, clamped to the grid.
fn particle_window<T: Real>(stencils: &[KernelStencil<T>], spec: &GridSpec) -> (usize, usize, usize, usize) {
    let mut lo = [usize::MAX; 2];
    let mut hi = [0usize; 2];
    for st in stencils {
        for a in 0..2 {
            lo[a] = lo[a].min(st.base[a]);
            hi[a] = hi[a].max(st.base[a] + 3);
        }
    }
    let i0 = lo[0].saturating_sub(WINDOW_MARGIN);
    let j0 = lo[1].saturating_sub(WINDOW_MARGIN);
    let i1 = (hi[0] + WINDOW_MARGIN).min(spec.nx);
    let j1 = (hi[1] + WINDOW_MARGIN).min(spec.ny);
    (i0, j0, i1, j1)
}

/// Node forces `Σ_p w_ip·m_p·b_p` with
/// `b_p = α·v_p − β|v_p|²v_p + D_L[∇(∇·v)]_p + D1[∇²v]_p + D2[(v·∇)²v]_p + σ·η_p`.
///
/// `v` is the node velocity field after P2G; derivative fields are sampled
/// at particle positions. `noise` holds the standard-normal draws `η_p`
/// and may be empty when `σ = 0`.
pub fn active_force<T: Real>(
    v: &VectorField<T>,
    particles: &[Particle<T>],
    stencils: &[KernelStencil<T>],
    c: &ActiveCoefficients<T>,
    noise: &[V2<f64>],
    deterministic: bool,
) -> Result<Vec<V2<T>>> {
    let spec = v.spec;
    if c.is_zero() || particles.is_empty() {
        return Ok(vec![V2::zero(); spec.len()]);
    }
    let needs_derivatives = [c.d_l, c.d1, c.d2].iter().any(|d| d.val() != 0.0);
    let sampled: Option<(TtFeatures<T>, [usize; 2])> = if needs_derivatives {
        let (i0, j0, i1, j1) = particle_window(stencils, &spec);
        let w = v.window(i0, j0, i1, j1);
        Some((tt_feature_fields(&w)?, [i0, j0]))
    } else {
        if !v.is_finite() {
            return Err(Error::NonFiniteField { what: "velocity" });
        }
        None
    };
    if c.noise_sigma.val() != 0.0 && noise.len() < particles.len() {
        return Err(Error::DimMismatch(format!("{} noise samples for {} particles", noise.len(), particles.len())));
    }

    let per_particle: Vec<V2<T>> = particles
        .iter()
        .enumerate()
        .map(|(p, part)| {
            let vp = part.v;
            let mut b = vp.scale(c.alpha) - vp.scale(vp.norm2() * c.beta);
            if let Some((feat, origin)) = &sampled {
                let st = &stencils[p];
                let mut gd = V2::zero();
                let mut lap = V2::zero();
                let mut adv = V2::zero();
                for bb in 0..3 {
                    for a in 0..3 {
                        let node = feat.grad_div.spec.index(st.base[0] + a - origin[0], st.base[1] + bb - origin[1]);
                        let w = st.weights[a][bb];
                        gd += feat.grad_div.values[node].scale(w);
                        lap += feat.laplacian.values[node].scale(w);
                        adv += feat.advective.values[node].scale(w);
                    }
                }
                b += gd.scale(c.d_l) + lap.scale(c.d1) + adv.scale(c.d2);
            }
            if c.noise_sigma.val() != 0.0 {
                b += V2::new(c.noise_sigma * noise[p].x, c.noise_sigma * noise[p].y);
            }
            b.scale_f(part.mass)
        })
        .collect();
    Ok(scatter_weighted(&spec, stencils, deterministic, &per_particle))
}

/// Body-force configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BodyForceConfig {
    #[default]
    None,
    /// Attraction toward `goal` at preferred speed `speed` (pixels/frame).
    Goal { goal: [f64; 2], speed: f64 },
    /// Centripetal pull toward `center` for motion on a circle of `radius`.
    Centripetal { center: [f64; 2], radius: f64 },
}

impl BodyForceConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            BodyForceConfig::Goal { speed, .. } if !(speed >= 0.0) => Err("goal speed must be >= 0".into()),
            BodyForceConfig::Centripetal { radius, .. } if !(radius > 0.0) => {
                Err("centripetal radius must be > 0".into())
            }
            _ => Ok(()),
        }
    }
}

/// Per-particle goal force `(m_p/Δt)(v_d·e_pg − v_p)`.
pub fn goal_particle_force<T: Real>(p: &Particle<T>, goal: V2<f64>, speed: f64, dt: f64) -> V2<T> {
    let to_goal = goal - p.x.val();
    let dist = to_goal.norm();
    let dir = if dist < 1e-6 { V2::zero() } else { to_goal.scale(1.0 / dist) };
    let rate = p.mass / dt;
    (dir.scale(speed).lift::<T>() - p.v).scale_f(rate)
}

/// Per-particle centripetal force of magnitude `m|v|²/r` toward `center`.
pub fn centripetal_particle_force<T: Real>(p: &Particle<T>, center: V2<f64>, radius: f64) -> V2<T> {
    let to_c = center - p.x.val();
    let dist = to_c.norm();
    if dist < 1e-9 {
        return V2::zero();
    }
    let mag = p.v.norm2() * (p.mass / radius);
    to_c.scale(1.0 / dist).lift::<T>().scale(mag)
}

pub fn goal_attraction<T: Real>(
    particles: &[Particle<T>],
    stencils: &[KernelStencil<T>],
    spec: &GridSpec,
    goal: V2<f64>,
    speed: f64,
    dt: f64,
    deterministic: bool,
) -> Vec<V2<T>> {
    let f: Vec<V2<T>> = particles.iter().map(|p| goal_particle_force(p, goal, speed, dt)).collect();
    scatter_weighted(spec, stencils, deterministic, &f)
}

pub fn centripetal<T: Real>(
    particles: &[Particle<T>],
    stencils: &[KernelStencil<T>],
    spec: &GridSpec,
    center: V2<f64>,
    radius: f64,
    deterministic: bool,
) -> Vec<V2<T>> {
    let f: Vec<V2<T>> = particles.iter().map(|p| centripetal_particle_force(p, center, radius)).collect();
    scatter_weighted(spec, stencils, deterministic, &f)
}

/// Dispatches on the configured body force; `None` when there is none.
pub fn body_force<T: Real>(
    particles: &[Particle<T>],
    stencils: &[KernelStencil<T>],
    cfg: &BodyForceConfig,
    spec: &GridSpec,
    dt: f64,
    deterministic: bool,
) -> Option<Vec<V2<T>>> {
    match *cfg {
        BodyForceConfig::None => None,
        BodyForceConfig::Goal { goal, speed } => {
            Some(goal_attraction(particles, stencils, spec, V2::new(goal[0], goal[1]), speed, dt, deterministic))
        }
        BodyForceConfig::Centripetal { center, radius } => {
            Some(centripetal(particles, stencils, spec, V2::new(center[0], center[1]), radius, deterministic))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpm::{noise_sample, stencils};

    fn spec() -> GridSpec {
        GridSpec::covering(40.0, 40.0, 1.0).unwrap()
    }

    fn sum(f: &[V2<f64>]) -> V2<f64> {
        f.iter().fold(V2::zero(), |a, &b| a + b)
    }

    #[test]
    fn feature_fields_of_constant_and_linear() {
        let s = spec();
        let c = VectorField::from_fn(s, |_| V2::new(2.0, 0.0));
        let f = tt_feature_fields(&c).unwrap();
        assert!(f.cubic.values.iter().all(|v| *v == V2::new(8.0, 0.0)));
        for fld in [&f.grad_div, &f.laplacian, &f.advective] {
            assert!(fld.values.iter().all(|v| *v == V2::zero()));
        }
        let z = tt_feature_fields(&VectorField::<f64>::zeros(s)).unwrap();
        assert!(z.cubic.values.iter().chain(&z.advective.values).all(|v| *v == V2::zero()));
        let lin = VectorField::from_fn(s, |p| V2::new(p.x, 0.0));
        let g = tt_feature_fields(&lin).unwrap().grad_div;
        for j in 1..s.ny - 1 {
            for i in 1..s.nx - 1 {
                assert!(g.at(i, j).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn alpha_force_on_a_single_particle() {
        let s = spec();
        let mut p = Particle::new(V2::new(10.0, 10.0), V2::new(2.0, 0.0), 1.0, 2.0);
        p.mass = 1.0;
        let ps = vec![p];
        let st = stencils(&ps, &s).unwrap();
        let v = VectorField::zeros(s);
        let c = ActiveParams { alpha: 0.5, ..Default::default() }.coefficients();
        let f = active_force(&v, &ps, &st, &c, &[], true).unwrap();
        let t = sum(&f);
        assert!((t.x - 1.0).abs() < 1e-14 && t.y.abs() < 1e-14);
        let zero = ActiveParams::default().coefficients();
        assert!(active_force(&v, &ps, &st, &zero, &[], true).unwrap().iter().all(|f| *f == V2::zero()));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let s = spec();
        let ps: Vec<_> =
            (0..5).map(|i| Particle::new(V2::new(8.0 + 3.0 * i as f64, 12.0), V2::zero(), 1.0, 2.0)).collect();
        let st = stencils(&ps, &s).unwrap();
        let v = VectorField::zeros(s);
        let c = ActiveParams { noise_sigma: 0.1, ..Default::default() }.coefficients();
        let eta = |seed| (0..5).map(|i| noise_sample(seed, 3, i)).collect::<Vec<_>>();
        let a = active_force(&v, &ps, &st, &c, &eta(9), true).unwrap();
        let b = active_force(&v, &ps, &st, &c, &eta(9), true).unwrap();
        let d = active_force(&v, &ps, &st, &c, &eta(10), true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn windowed_features_match_full_grid() {
        let s = spec();
        let ps: Vec<_> = (0..4)
            .map(|i| {
                Particle::new(
                    V2::new(15.0 + 1.7 * i as f64, 18.0 - 0.6 * i as f64),
                    V2::new(0.3 * i as f64, -0.2),
                    1.0,
                    2.0,
                )
            })
            .collect();
        let st = stencils(&ps, &s).unwrap();
        let mut g = crate::grid::Grid::new(s);
        crate::mpm::p2g(&ps, &st, &mut g, true);
        let v = g.velocity_field();
        let c = ActiveParams { d_l: 0.7, d1: 0.4, d2: 0.9, ..Default::default() }.coefficients();
        let windowed = active_force(&v, &ps, &st, &c, &[], true).unwrap();

        let full = tt_feature_fields(&v).unwrap();
        let per: Vec<V2<f64>> = ps
            .iter()
            .zip(&st)
            .map(|(p, st)| {
                (full.grad_div.sample(st).scale(0.7)
                    + full.laplacian.sample(st).scale(0.4)
                    + full.advective.sample(st).scale(0.9))
                .scale(p.mass)
            })
            .collect();
        let reference = scatter_weighted(&s, &st, true, &per);
        for (a, b) in windowed.iter().zip(&reference) {
            assert!((*a - *b).norm() < 1e-12);
        }
    }

    #[test]
    fn goal_force_examples() {
        let goal = V2::new(10.0, 0.0);
        let mut p = Particle::new(V2::new(0.0, 0.0), V2::new(0.0, 0.0), 1.0, 2.0);
        p.mass = 1.0;
        let f = goal_particle_force(&p, goal, 1.0, 1.0);
        assert_eq!(f, V2::new(1.0, 0.0));
        p.v = V2::new(1.0, 0.0);
        assert_eq!(goal_particle_force(&p, goal, 1.0, 1.0), V2::zero());
        p.x = goal;
        p.v = V2::new(0.5, -0.5);
        assert_eq!(goal_particle_force(&p, goal, 1.0, 0.5), V2::new(-1.0, 1.0));
    }

    #[test]
    fn centripetal_examples() {
        let mut p = Particle::new(V2::new(4.0, 0.0), V2::new(0.0, 2.0), 1.0, 2.0);
        p.mass = 1.0;
        let f = centripetal_particle_force(&p, V2::zero(), 4.0);
        assert!((f.x + 1.0).abs() < 1e-15 && f.y.abs() < 1e-15);
        p.v = V2::zero();
        assert_eq!(centripetal_particle_force(&p, V2::zero(), 4.0), V2::zero());
    }
}
