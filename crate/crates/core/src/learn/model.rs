//! Learnable parameter models.
//!
//! The flat vector `θ` always starts with the six raw active-force
//! coefficients `[alpha, beta, d_l, d1, d2, noise_sigma]`, followed by the
//! material block whose layout depends on the representation. `alpha` is
//! used as is; every other coefficient passes through softplus.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::{ActiveCoefficients, ActiveParams};
use crate::linalg::V2;
use crate::mpm::Particle;
use crate::neighbors::NeighborTable;
use crate::params::{ParamSource, Resolved};
use crate::real::{softplus_inv, Real};

pub const ACTIVE_NAMES: [&str; 6] = ["alpha", "beta", "d_l", "d1", "d2", "noise_sigma"];
pub const N_ACTIVE: usize = ACTIVE_NAMES.len();

/// Raw value standing in for an exact zero behind softplus: its softplus
/// underflows to 0.
pub const ZERO_RAW: f64 = -1000.0;

/// Number of per-particle input features of the neighborhood model.
pub const N_FEATURES: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Softplus,
}

impl Transform {
    pub fn apply<T: Real>(self, raw: T) -> T {
        match self {
            Transform::Identity => raw,
            Transform::Softplus => raw.softplus(),
        }
    }

    pub fn inverse(self, value: f64) -> f64 {
        match self {
            Transform::Identity => value,
            Transform::Softplus if value == 0.0 => ZERO_RAW,
            Transform::Softplus => softplus_inv(value),
        }
    }
}

/// How `ε` and `k` are produced for each particle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    /// One `ε` and one `k` for every particle.
    GlobalScalars,
    /// A table indexed by particle order.
    PerParticle { count: usize },
    /// A dense map of per-particle features `[x_p, v_p, neighbor
    /// aggregates]` with `layers` hidden layers of `hidden` tanh units.
    Neighborhood { hidden: usize, layers: usize, position_scale: f64 },
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::GlobalScalars => "global",
            Representation::PerParticle { .. } => "per_particle",
            Representation::Neighborhood { .. } => "neighborhood",
        }
    }

    fn layer_sizes(hidden: usize, layers: usize) -> Vec<usize> {
        let mut s = vec![N_FEATURES];
        s.extend(std::iter::repeat_n(hidden, layers));
        s.push(2);
        s
    }

    fn material_len(&self) -> usize {
        match *self {
            Representation::GlobalScalars => 2,
            Representation::PerParticle { count } => 2 * count,
            Representation::Neighborhood { hidden, layers, .. } => {
                Self::layer_sizes(hidden, layers).windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamModel {
    pub repr: Representation,
    pub theta: Vec<f64>,
    pub frozen: Vec<bool>,
    pub noise_seed: u64,
}

fn active_transform(i: usize) -> Transform {
    if i == 0 {
        Transform::Identity
    } else {
        Transform::Softplus
    }
}

fn active_raw(a: &ActiveParams) -> Vec<f64> {
    [a.alpha, a.beta, a.d_l, a.d1, a.d2, a.noise_sigma]
        .iter()
        .enumerate()
        .map(|(i, &v)| active_transform(i).inverse(v))
        .collect()
}

impl ParamModel {
    pub fn global(eps: f64, k: f64, active: &ActiveParams) -> Self {
        let mut theta = active_raw(active);
        theta.push(Transform::Softplus.inverse(eps));
        theta.push(Transform::Softplus.inverse(k));
        ParamModel::from_theta(Representation::GlobalScalars, theta, active.seed)
    }

    pub fn per_particle(eps: &[f64], k: &[f64], active: &ActiveParams) -> Result<Self> {
        if eps.len() != k.len() {
            return Err(Error::DimMismatch(format!("{} eps values, {} k values", eps.len(), k.len())));
        }
        let mut theta = active_raw(active);
        theta.extend(eps.iter().map(|&e| Transform::Softplus.inverse(e)));
        theta.extend(k.iter().map(|&e| Transform::Softplus.inverse(e)));
        Ok(ParamModel::from_theta(Representation::PerParticle { count: eps.len() }, theta, active.seed))
    }

    /// Neighborhood model whose output starts close to `(eps0, k0)`.
    pub fn neighborhood(
        eps0: f64,
        k0: f64,
        active: &ActiveParams,
        hidden: usize,
        layers: usize,
        position_scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = Representation::layer_sizes(hidden, layers);
        let mut theta = active_raw(active);
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() * if l == last { 0.1 } else { 1.0 };
            theta.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            if l == last {
                theta.push(Transform::Softplus.inverse(eps0));
                theta.push(Transform::Softplus.inverse(k0));
            } else {
                theta.extend(std::iter::repeat_n(0.0, fan_out));
            }
        }
        ParamModel::from_theta(Representation::Neighborhood { hidden, layers, position_scale }, theta, active.seed)
    }

    fn from_theta(repr: Representation, theta: Vec<f64>, noise_seed: u64) -> Self {
        let n = theta.len();
        ParamModel { repr, theta, frozen: vec![false; n], noise_seed }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Positions in `θ` governed by a named parameter. `eps` and `k` map to
    /// their block, or to the whole network for the neighborhood model.
    pub fn indices_of(&self, name: &str) -> Result<Vec<usize>> {
        if let Some(i) = ACTIVE_NAMES.iter().position(|&n| n == name) {
            return Ok(vec![i]);
        }
        let m = N_ACTIVE;
        match (&self.repr, name) {
            (Representation::GlobalScalars, "eps") => Ok(vec![m]),
            (Representation::GlobalScalars, "k") => Ok(vec![m + 1]),
            (Representation::PerParticle { count }, "eps") => Ok((m..m + count).collect()),
            (Representation::PerParticle { count }, "k") => Ok((m + count..m + 2 * count).collect()),
            (Representation::Neighborhood { .. }, "eps" | "k") => Ok((m..self.theta.len()).collect()),
            _ => Err(Error::Invalid(format!("unknown parameter {name:?}"))),
        }
    }

    pub fn freeze_all(&mut self) {
        self.frozen.fill(true);
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        for i in self.indices_of(name)? {
            self.frozen[i] = frozen;
        }
        Ok(())
    }

    /// Only the named parameters stay learnable.
    pub fn learn_only(&mut self, names: &[&str]) -> Result<()> {
        self.freeze_all();
        for n in names {
            self.set_frozen(n, false)?;
        }
        Ok(())
    }

    pub fn transform_of(&self, i: usize) -> Transform {
        if i < N_ACTIVE {
            active_transform(i)
        } else if matches!(self.repr, Representation::Neighborhood { .. }) {
            Transform::Identity
        } else {
            Transform::Softplus
        }
    }

    /// Physical value of a named scalar parameter.
    pub fn physical(&self, name: &str) -> Result<f64> {
        let idx = self.indices_of(name)?;
        if idx.len() != 1 {
            return Err(Error::Invalid(format!("{name:?} is not a scalar in this model")));
        }
        Ok(self.transform_of(idx[0]).apply(self.theta[idx[0]]))
    }

    pub fn set_physical(&mut self, name: &str, value: f64) -> Result<()> {
        for i in self.indices_of(name)? {
            self.theta[i] = self.transform_of(i).inverse(value);
        }
        Ok(())
    }

    pub fn active_params(&self) -> ActiveParams {
        let v: Vec<f64> = (0..N_ACTIVE).map(|i| active_transform(i).apply(self.theta[i])).collect();
        ActiveParams {
            alpha: v[0],
            beta: v[1],
            d_l: v[2],
            d1: v[3],
            d2: v[4],
            noise_sigma: v[5],
            seed: self.noise_seed,
        }
    }

    pub fn bind<T: Real>(&self, theta: Vec<T>) -> BoundModel<'_, T> {
        assert_eq!(theta.len(), self.theta.len());
        BoundModel { model: self, theta }
    }

    pub fn bind_f64(&self) -> BoundModel<'_, f64> {
        self.bind(self.theta.clone())
    }

    pub fn to_file(&self) -> ModelFile {
        let mut transforms = BTreeMap::new();
        for (i, n) in ACTIVE_NAMES.iter().enumerate() {
            transforms.insert(n.to_string(), active_transform(i));
        }
        let material = self.transform_of(N_ACTIVE);
        transforms.insert("eps".into(), material);
        transforms.insert("k".into(), material);
        ModelFile {
            schema_version: 1,
            repr: self.repr.name().into(),
            repr_config: self.repr.clone(),
            theta: self.theta.clone(),
            transforms,
            frozen: self.frozen.clone(),
            noise_seed: self.noise_seed,
        }
    }

    pub fn from_file(f: ModelFile) -> Result<Self> {
        if f.schema_version != 1 {
            return Err(Error::Invalid(format!("unsupported model schema_version {}", f.schema_version)));
        }
        if f.repr != f.repr_config.name() {
            return Err(Error::Invalid(format!("repr {:?} does not match repr_config", f.repr)));
        }
        let expect = N_ACTIVE + f.repr_config.material_len();
        if f.theta.len() != expect {
            return Err(Error::DimMismatch(format!("theta has {} entries, {} expected", f.theta.len(), expect)));
        }
        if f.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("theta holds non-finite values".into()));
        }
        let frozen = if f.frozen.is_empty() { vec![false; expect] } else { f.frozen };
        if frozen.len() != expect {
            return Err(Error::DimMismatch("frozen mask length differs from theta".into()));
        }
        Ok(ParamModel { repr: f.repr_config, theta: f.theta, frozen, noise_seed: f.noise_seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ParamModel::from_file(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Serialized form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub repr: String,
    pub repr_config: Representation,
    pub theta: Vec<f64>,
    pub transforms: BTreeMap<String, Transform>,
    #[serde(default)]
    pub frozen: Vec<bool>,
    #[serde(default)]
    pub noise_seed: u64,
}

/// A model with `θ` lifted to a scalar type.
pub struct BoundModel<'a, T> {
    pub model: &'a ParamModel,
    pub theta: Vec<T>,
}

impl<T: Real> BoundModel<'_, T> {
    fn active(&self) -> ActiveCoefficients<T> {
        let t = |i: usize| active_transform(i).apply(self.theta[i]);
        ActiveCoefficients { alpha: t(0), beta: t(1), d_l: t(2), d1: t(3), d2: t(4), noise_sigma: t(5) }
    }

    fn features(&self, particles: &[Particle<T>], neighbors: &NeighborTable, p: usize, scale: f64) -> [T; N_FEATURES] {
        let part = &particles[p];
        let mut wsum = T::zero();
        let mut rel_x = V2::zero();
        let mut rel_v = V2::zero();
        for &q in neighbors.of(p) {
            let other = &particles[q];
            let radius = part.r_b + other.r_b;
            let d = other.x - part.x;
            let r = d.norm2().sqrt() / radius;
            let w = (r * -1.0 + 1.0).relu();
            let w = w * w;
            wsum += w;
            rel_x += d.scale(w / radius);
            rel_v += (other.v - part.v).scale(w);
        }
        let norm = wsum + 1e-9;
        [
            part.x.x / scale,
            part.x.y / scale,
            part.v.x,
            part.v.y,
            rel_x.x / norm,
            rel_x.y / norm,
            rel_v.x / norm,
            rel_v.y / norm,
            wsum * 0.25,
        ]
    }

    fn mlp(&self, input: &[T], hidden: usize, layers: usize) -> [T; 2] {
        let sizes = Representation::layer_sizes(hidden, layers);
        let mut off = N_ACTIVE;
        let mut x: Vec<T> = input.to_vec();
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.theta[off..off + fan_in * fan_out];
            let bias = &self.theta[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            x = (0..fan_out)
                .map(|o| {
                    let mut acc = bias[o];
                    for (i, xi) in x.iter().enumerate() {
                        acc += weights[o * fan_in + i] * *xi;
                    }
                    if l == last {
                        acc
                    } else {
                        acc.tanh()
                    }
                })
                .collect();
        }
        [x[0], x[1]]
    }
}

impl<T: Real> ParamSource<T> for BoundModel<'_, T> {
    fn resolve(&self, particles: &[Particle<T>], neighbors: &NeighborTable) -> Result<Resolved<T>> {
        let n = particles.len();
        let m = N_ACTIVE;
        let (eps, k) = match self.model.repr {
            Representation::GlobalScalars => (vec![self.theta[m].softplus(); n], vec![self.theta[m + 1].softplus(); n]),
            Representation::PerParticle { count } => {
                if n > count {
                    return Err(Error::DimMismatch(format!("{n} particles, table holds {count}")));
                }
                (
                    (0..n).map(|p| self.theta[m + p].softplus()).collect(),
                    (0..n).map(|p| self.theta[m + count + p].softplus()).collect(),
                )
            }
            Representation::Neighborhood { hidden, layers, position_scale } => {
                let mut eps = Vec::with_capacity(n);
                let mut k = Vec::with_capacity(n);
                for p in 0..n {
                    let f = self.features(particles, neighbors, p, position_scale);
                    let [e, kk] = self.mlp(&f, hidden, layers);
                    eps.push(e.softplus());
                    k.push(kk.softplus());
                }
                (eps, k)
            }
        };
        Ok(Resolved { eps, k, active: self.active(), noise_seed: self.model.noise_seed })
    }
}
