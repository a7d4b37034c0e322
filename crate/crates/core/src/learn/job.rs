//! Fitting a model to a stored flow sequence: the configuration file and
//! the end-to-end driver behind the `train` command.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::forces::ActiveParams;
use crate::geometry::Geometry;
use crate::learn::init::particles_from_flow;
use crate::learn::loss::{err_flow_from_fields, err_vel};
use crate::learn::model::ParamModel;
use crate::learn::train::{predict_fields, train, EpochRecord, TrainConfig, TrainData};
use crate::mpm::{Simulation, State, StepConfig};

fn one() -> f64 {
    1.0
}
fn gamma() -> f64 {
    0.9
}
fn r_a() -> f64 {
    2.0
}
fn r_b() -> f64 {
    3.5
}
fn threshold() -> f64 {
    0.1
}
fn hidden() -> usize {
    32
}
fn layers() -> usize {
    2
}
fn position_scale() -> f64 {
    100.0
}

/// Simulation settings for the observed scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Frames per step; frame times are rounded to whole steps.
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default = "gamma")]
    pub gamma: f64,
    #[serde(default = "r_a")]
    pub r_a: f64,
    #[serde(default = "r_b")]
    pub r_b: f64,
    /// Particles are seeded where `|flow| > threshold·max|flow|` in the
    /// first frame.
    #[serde(default = "threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Treat the image border as a wall instead of open space.
    #[serde(default)]
    pub bounded: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Global,
    PerParticle,
    Neighborhood,
}

/// Starting point of the fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialModel {
    #[serde(default)]
    pub repr: ModelKind,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub active: ActiveParams,
    #[serde(default = "hidden")]
    pub hidden: usize,
    #[serde(default = "layers")]
    pub layers: usize,
    #[serde(default = "position_scale")]
    pub position_scale: f64,
}

impl Default for InitialModel {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl InitialModel {
    pub fn build(&self, particles: usize, seed: u64) -> Result<ParamModel> {
        Ok(match self.repr {
            ModelKind::Global => ParamModel::global(self.eps, self.k, &self.active),
            ModelKind::PerParticle => {
                ParamModel::per_particle(&vec![self.eps; particles], &vec![self.k; particles], &self.active)?
            }
            ModelKind::Neighborhood => ParamModel::neighborhood(
                self.eps,
                self.k,
                &self.active,
                self.hidden,
                self.layers,
                self.position_scale,
                seed,
            ),
        })
    }
}

/// Contents of a training configuration file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub model: InitialModel,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: ParamModel,
    pub history: Vec<EpochRecord>,
    pub particles: usize,
    pub diverged: Option<usize>,
    /// Errors of the fitted rollout against every observed frame.
    pub err_vel: f64,
    pub err_flow: f64,
}

impl FitConfig {
    pub fn simulation(&self, seq: &FlowSequence) -> Result<Simulation> {
        let cfg = StepConfig { dt: self.scene.dt, gamma: self.scene.gamma, deterministic: true, seed: self.scene.seed };
        let (w, h) = (seq.width as f64, seq.height as f64);
        if self.scene.bounded {
            Simulation::new(Geometry::open_box(w, h), seq.dx, cfg)
        } else {
            Simulation::unbounded(w, h, seq.dx, cfg)
        }
    }
}

/// Seeds particles from the first frame, fits the configured model and
/// scores the fitted rollout.
pub fn fit_flows(seq: &FlowSequence, cfg: &FitConfig) -> Result<FitOutcome> {
    let sim = cfg.simulation(seq)?;
    let data = TrainData::from_sequence(seq, cfg.scene.dt)?;
    let particles =
        particles_from_flow(&seq.frames[0], cfg.scene.r_a, cfg.scene.r_b, cfg.scene.threshold, cfg.scene.seed);
    if particles.is_empty() {
        return Err(Error::Invalid("the first flow frame has no motion to seed particles from".into()));
    }
    let init = State::new(particles);
    let model = cfg.model.build(init.particles.len(), cfg.train.seed)?;
    let out = train(&data, &sim, &init, model, &cfg.train)?;
    let pred = predict_fields(&out.model, &sim, &init, &data)?;
    let gt: Vec<_> = data.frames.iter().map(|f| f.field.clone()).collect();
    Ok(FitOutcome {
        err_vel: err_vel(&pred, &gt)?,
        err_flow: err_flow_from_fields(&pred, &seq.frames)?,
        model: out.model,
        history: out.history,
        particles: init.particles.len(),
        diverged: out.diverged,
    })
}
