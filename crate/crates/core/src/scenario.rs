//! Scenario files, their validation, and the simulation runner that writes
//! a run directory.
//!
//! Run directory layout:
//!
//! ```text
//! run.json                       RunInfo
//! frames/frame_NNNNN.json|.cmp   particle snapshots
//! fields/frame_NNNNN_velocity.cmf
//! fields/frame_NNNNN_stress.cmf
//! report.json                    analyze::Report
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analyze::{self, stress_map};
use crate::error::{Error, FieldError, Result};
use crate::field_io::{write_scalar, write_vector};
use crate::forces::{ActiveParams, BodyForceConfig};
use crate::geometry::{Exit, Geometry, Wall};
use crate::grid::{Grid, GridSpec};
use crate::learn::init::accept_around;
use crate::learn::model::ParamModel;
use crate::linalg::V2;
use crate::material::TractionMode;
use crate::mpm::{self, Particle, Simulation, State, StepConfig};
use crate::neighbors::NeighborTable;
use crate::params::{FixedParams, ParamSource, Resolved};
use crate::snapshot::{frame_stem, write_snapshot};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const RUN_SCHEMA_VERSION: u32 = 1;

pub const RUN_INFO: &str = "run.json";
pub const FRAMES_DIR: &str = "frames";
pub const FIELDS_DIR: &str = "fields";
pub const REPORT_FILE: &str = "report.json";

/// Endpoints of an exit may sit this far (pixels) from a solid surface.
pub const EXIT_TOLERANCE: f64 = 0.5;

pub fn velocity_path(run_dir: &Path, frame: usize) -> PathBuf {
    run_dir.join(FIELDS_DIR).join(format!("{}_velocity.cmf", frame_stem(frame)))
}

pub fn stress_path(run_dir: &Path, frame: usize) -> PathBuf {
    run_dir.join(FIELDS_DIR).join(format!("{}_stress.cmf", frame_stem(frame)))
}

pub fn snapshot_path(run_dir: &Path, frame: usize) -> PathBuf {
    run_dir.join(FRAMES_DIR).join(format!("{}.json", frame_stem(frame)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

/// `count` particles placed at random, non-overlapping, inside `region`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spawn {
    pub region: Rect,
    pub count: usize,
    pub r_a: f64,
    pub r_b: f64,
    /// Initial velocity, pixels/frame.
    #[serde(default)]
    pub v0: [f64; 2],
}

fn default_eps() -> f64 {
    5.0
}
fn default_k() -> f64 {
    1.0
}

/// Global material coefficients used when no fitted model is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialDefaults {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub traction: TractionMode,
}

impl Default for MaterialDefaults {
    fn default() -> Self {
        MaterialDefaults { eps: default_eps(), k: default_k(), traction: TractionMode::default() }
    }
}

fn default_version() -> u32 {
    SCENARIO_SCHEMA_VERSION
}
fn default_dt() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.9
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub domain: Domain,
    pub dx: f64,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub exits: Vec<Exit>,
    #[serde(default)]
    pub spawns: Vec<Spawn>,
    #[serde(default)]
    pub body_force: BodyForceConfig,
    #[serde(default)]
    pub material: MaterialDefaults,
    /// The scenario seed replaces `active.seed`.
    #[serde(default)]
    pub active: ActiveParams,
    /// Fitted model file; replaces `material` and `active` when set.
    /// Relative paths resolve against the scenario's base directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Seeds particle placement and active-force noise.
    #[serde(default)]
    pub seed: u64,
    /// Steps between written frames.
    #[serde(default = "default_one")]
    pub snapshot_every: usize,
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

fn parse_errors(e: serde_path_to_error::Error<serde_json::Error>) -> Vec<FieldError> {
    let path = e.path().to_string();
    let field = if path == "." { "$".to_string() } else { path };
    vec![FieldError::new(field, e.into_inner().to_string())]
}

fn finite_pos(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl Scenario {
    /// Parses and validates.
    pub fn from_json(text: &str) -> std::result::Result<Self, Vec<FieldError>> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(parse_errors)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_value(value: serde_json::Value) -> std::result::Result<Self, Vec<FieldError>> {
        let sc: Scenario = serde_path_to_error::deserialize(value).map_err(parse_errors)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text).map_err(Error::InvalidScenario)
    }

    /// A copy with `overrides` merged in (JSON merge patch), revalidated.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> std::result::Result<Self, Vec<FieldError>> {
        let mut base = serde_json::to_value(self).expect("scenario serializes");
        merge(&mut base, overrides);
        Scenario::from_value(base)
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            width: self.domain.width,
            height: self.domain.height,
            walls: self.walls.clone(),
            exits: self.exits.clone(),
        }
    }

    /// Every rule violation, by field.
    pub fn validate(&self) -> std::result::Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        let mut bad = |f: String, m: &str| errs.push(FieldError::new(f, m));
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            bad("schema_version".into(), "unsupported schema version");
        }
        let (w, h) = (self.domain.width, self.domain.height);
        if !finite_pos(w) {
            bad("domain.width".into(), "must be > 0");
        }
        if !finite_pos(h) {
            bad("domain.height".into(), "must be > 0");
        }
        if !finite_pos(self.dx) {
            bad("dx".into(), "must be > 0");
        } else if finite_pos(w) && finite_pos(h) && (w / self.dx < 1.0 || h / self.dx < 1.0) {
            bad("dx".into(), "must not exceed the domain size");
        }
        for (i, wall) in self.walls.iter().enumerate() {
            match *wall {
                Wall::Rect { min, max } => {
                    if !(min[0] < max[0] && min[1] < max[1]) || !min.iter().chain(&max).all(|v| v.is_finite()) {
                        bad(format!("walls[{i}]"), "rectangle needs min < max");
                    }
                }
                Wall::Circle { center, radius } => {
                    if !finite_pos(radius) || !center.iter().all(|v| v.is_finite()) {
                        bad(format!("walls[{i}].radius"), "must be > 0");
                    }
                }
            }
        }
        let geom = self.geometry();
        let on_surface = |p: V2<f64>| {
            let dom = p.x.min(w - p.x).min(p.y).min(h - p.y).abs();
            let wall = self.walls.iter().fold(f64::INFINITY, |m, wl| m.min(wl.sdf(p).abs()));
            dom.min(wall) <= EXIT_TOLERANCE
        };
        for (i, e) in self.exits.iter().enumerate() {
            let a = V2::new(e.a[0], e.a[1]);
            let b = V2::new(e.b[0], e.b[1]);
            if !(e.length() > 0.0) {
                bad(format!("exits[{i}]"), "exit segment has zero length");
            } else if ![a, b, (a + b).scale(0.5)].into_iter().all(on_surface) {
                bad(format!("exits[{i}]"), "exit must lie on the domain boundary or a wall face");
            }
        }
        if self.spawns.is_empty() {
            bad("spawns".into(), "no particles");
        }
        for (i, s) in self.spawns.iter().enumerate() {
            if s.count == 0 {
                bad(format!("spawns[{i}].count"), "must be > 0");
            }
            if !finite_pos(s.r_a) {
                bad(format!("spawns[{i}].r_a"), "must be > 0");
            }
            if !(s.r_b > s.r_a && s.r_b.is_finite()) {
                bad(format!("spawns[{i}].r_b"), "must exceed r_a");
            }
            let r = &s.region;
            if !(r.min[0] < r.max[0] && r.min[1] < r.max[1]) {
                bad(format!("spawns[{i}].region"), "needs min < max");
            } else if !(geom.contains(V2::new(r.min[0], r.min[1])) && geom.contains(V2::new(r.max[0], r.max[1]))) {
                bad(format!("spawns[{i}].region"), "must lie inside the domain");
            }
            if !s.v0.iter().all(|v| v.is_finite()) {
                bad(format!("spawns[{i}].v0"), "must be finite");
            }
        }
        if let Err(m) = self.body_force.validate() {
            bad("body_force".into(), &m);
        }
        if !(self.material.eps >= 0.0 && self.material.eps.is_finite()) {
            bad("material.eps".into(), "must be >= 0");
        }
        if !(self.material.k >= 0.0 && self.material.k.is_finite()) {
            bad("material.k".into(), "must be >= 0");
        }
        let a = &self.active;
        for (name, v) in [("beta", a.beta), ("d_l", a.d_l), ("d1", a.d1), ("d2", a.d2), ("noise_sigma", a.noise_sigma)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                bad(format!("active.{name}"), "must be >= 0");
            }
        }
        if !a.alpha.is_finite() {
            bad("active.alpha".into(), "must be finite");
        }
        if !finite_pos(self.dt) {
            bad("dt".into(), "must be > 0");
        }
        if self.steps == 0 {
            bad("steps".into(), "must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bad("gamma".into(), "must be in [0, 1]");
        }
        if self.snapshot_every == 0 {
            bad("snapshot_every".into(), "must be >= 1");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let cfg = StepConfig { dt: self.dt, gamma: self.gamma, deterministic: self.deterministic, seed: self.seed };
        let mut sim = Simulation::new(self.geometry(), self.dx, cfg)?.with_body(self.body_force.clone());
        sim.material.traction = self.material.traction;
        Ok(sim)
    }

    /// Places every spawn's particles by seeded dart throwing, clear of
    /// walls and of each other.
    pub fn particles(&self) -> Result<Vec<Particle<f64>>> {
        let geom = self.geometry();
        let mut placed: Vec<(V2<f64>, f64)> = Vec::new();
        let mut out = Vec::new();
        let mut errs = Vec::new();
        for (i, s) in self.spawns.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (0x5350_4157_u64 << 8) ^ i as u64);
            let r = &s.region;
            let attempts = 60 * s.count + 1000;
            let darts = (0..attempts)
                .map(|_| V2::new(rng.random_range(r.min[0]..=r.max[0]), rng.random_range(r.min[1]..=r.max[1])))
                .filter(|&p| geom.sdf(p) >= s.r_a)
                .collect::<Vec<_>>();
            let pts = accept_around(&placed, darts, s.r_a, s.count);
            if pts.len() < s.count {
                errs.push(FieldError::new(
                    format!("spawns[{i}].count"),
                    format!("only {} of {} particles fit in the region", pts.len(), s.count),
                ));
            }
            for p in pts {
                placed.push((p, s.r_a));
                out.push(Particle::new(p, V2::new(s.v0[0], s.v0[1]), s.r_a, s.r_b));
            }
        }
        if !errs.is_empty() {
            return Err(Error::InvalidScenario(errs));
        }
        if out.is_empty() {
            return Err(Error::InvalidScenario(vec![FieldError::new("spawns", "no particles")]));
        }
        Ok(out)
    }

    /// Coefficients for the run: the fitted model if one is named,
    /// otherwise the material and active defaults.
    pub fn params(&self, base_dir: &Path) -> Result<RunParams> {
        match &self.model {
            Some(path) => {
                let p = base_dir.join(path);
                let mut m = ParamModel::load(&p).map_err(|e| {
                    Error::InvalidScenario(vec![FieldError::new("model", format!("cannot load {p:?}: {e}"))])
                })?;
                m.noise_seed = self.seed;
                Ok(RunParams::Model(m))
            }
            None => {
                let mut active = self.active.clone();
                active.seed = self.seed;
                Ok(RunParams::Fixed(FixedParams::new(self.material.eps, self.material.k, active)))
            }
        }
    }
}

/// JSON merge patch: objects merge recursively, `null` deletes, anything
/// else replaces.
pub fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    use serde_json::Value;
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    b.remove(k);
                } else {
                    merge(b.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Coefficient source of a run.
#[derive(Clone, Debug)]
pub enum RunParams {
    Fixed(FixedParams),
    Model(ParamModel),
}

impl ParamSource<f64> for RunParams {
    fn resolve(&self, particles: &[Particle<f64>], neighbors: &NeighborTable) -> Result<Resolved<f64>> {
        match self {
            RunParams::Fixed(f) => f.resolve(particles, neighbors),
            RunParams::Model(m) => m.bind_f64().resolve(particles, neighbors),
        }
    }
}

/// What a run directory holds, written at start and on completion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub schema_version: u32,
    /// Image size in pixels, for flow conversion.
    pub width: usize,
    pub height: usize,
    pub dx: f64,
    pub spec: GridSpec,
    pub geometry: Geometry,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_every: usize,
    /// Frames written so far.
    pub frames: usize,
    pub completed: bool,
}

impl RunInfo {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(RUN_INFO);
        if !path.exists() {
            return Err(Error::MissingFrames(run_dir.to_path_buf()));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        std::fs::write(run_dir.join(RUN_INFO), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Steps at which frames are written: 0, every `snapshot_every`, and the
/// last step.
pub fn frame_steps(steps: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(every.max(1)).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Progress {
    pub step: usize,
    pub steps: usize,
    pub frames: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub frames: usize,
    pub steps: usize,
    pub exited: usize,
    pub report: analyze::Report,
}

fn write_frame<P: ParamSource<f64> + ?Sized>(
    out: &Path,
    n: usize,
    state: &State<f64>,
    params: &P,
    spec: &GridSpec,
) -> Result<()> {
    write_snapshot(&out.join(FRAMES_DIR), n, state)?;
    write_vector(&velocity_path(out, n), &mpm::velocity_field(state, spec)?)?;
    write_scalar(&stress_path(out, n), &stress_map(&state.particles, params, spec)?)?;
    Ok(())
}

/// Runs `scenario` and writes the run directory `out`. `progress` is
/// called after every step and after every written frame; returning
/// `false` cancels the run.
pub fn run(
    scenario: &Scenario,
    base_dir: &Path,
    out: &Path,
    progress: &mut dyn FnMut(Progress) -> bool,
) -> Result<RunSummary> {
    scenario.validate().map_err(Error::InvalidScenario)?;
    let sim = scenario.simulation()?;
    let params = scenario.params(base_dir)?;
    let mut state = State::new(scenario.particles()?);
    std::fs::create_dir_all(out.join(FRAMES_DIR))?;
    std::fs::create_dir_all(out.join(FIELDS_DIR))?;
    let mut info = RunInfo {
        schema_version: RUN_SCHEMA_VERSION,
        width: scenario.domain.width.ceil() as usize,
        height: scenario.domain.height.ceil() as usize,
        dx: scenario.dx,
        spec: sim.spec,
        geometry: sim.geometry.clone(),
        dt: scenario.dt,
        steps: scenario.steps,
        snapshot_every: scenario.snapshot_every,
        frames: 0,
        completed: false,
    };
    info.save(out)?;

    let at = frame_steps(scenario.steps, scenario.snapshot_every);
    let mut grid = Grid::new(sim.spec);
    let mut frames = 0;
    let mut stop = |step: usize, frames: usize| {
        if progress(Progress { step, steps: scenario.steps, frames }) {
            Ok(())
        } else {
            Err(Error::Cancelled)
        }
    };
    for step in 0..=scenario.steps {
        if step > 0 {
            mpm::step(&sim, &mut state, &params, &mut grid)?;
        }
        if at.binary_search(&step).is_ok() {
            write_frame(out, frames, &state, &params, &sim.spec)?;
            frames += 1;
            info.frames = frames;
            info.save(out)?;
        }
        stop(step, frames)?;
    }
    info.completed = true;
    info.save(out)?;
    let report = analyze::report(out, None)?;
    analyze::write_report(out, &report)?;
    Ok(RunSummary { frames, steps: scenario.steps, exited: state.exited, report })
}
