//! Gradients through the simulator and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::field_mse;
use super::model::ParamModel;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::flow::{flow_to_field, FlowSequence};
use crate::grid::{stencil_for, Grid, GridSpec, VectorField};
use crate::linalg::{M2, V2};
use crate::mpm::{self, Particle, Simulation, State};
use crate::params::ParamSource;
use crate::real::Real;

/// A supervision frame: the observed node velocity field at a step.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetFrame {
    pub t: f64,
    /// Steps after the first frame.
    pub step: usize,
    pub field: VectorField<f64>,
}

/// Observed velocity fields on the simulation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub spec: GridSpec,
    pub frames: Vec<TargetFrame>,
}

impl TrainData {
    /// Converts every flow frame to a grid field once, up front. Frame
    /// times are rounded to whole steps.
    pub fn from_sequence(seq: &FlowSequence, dt: f64) -> Result<Self> {
        let spec = seq.grid()?;
        let fields = seq.frames.iter().map(|f| Ok((f.t, flow_to_field(f, &spec)?))).collect::<Result<Vec<_>>>()?;
        TrainData::from_fields(spec, fields, dt)
    }

    pub fn from_fields(spec: GridSpec, fields: Vec<(f64, VectorField<f64>)>, dt: f64) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::Invalid("training needs at least two frames".into()));
        }
        let t0 = fields[0].0;
        let mut frames = Vec::with_capacity(fields.len());
        for (t, field) in fields {
            if field.spec != spec {
                return Err(Error::DimMismatch("target field grid differs from the training grid".into()));
            }
            let step = ((t - t0) / dt).round();
            if step < 0.0 {
                return Err(Error::Invalid(format!("frame at t={t} precedes the first frame")));
            }
            let step = step as usize;
            if let Some(prev) = frames.last().map(|f: &TargetFrame| f.step) {
                if step <= prev {
                    return Err(Error::Invalid(format!("frames at t={t} and the previous one map to the same step")));
                }
            }
            frames.push(TargetFrame { t, step, field });
        }
        Ok(TrainData { spec, frames })
    }

    pub fn last_step(&self) -> usize {
        self.frames.last().map_or(0, |f| f.step)
    }
}

/// Rolls `state` forward `steps` steps and returns the mean field error at
/// the given step offsets (1-based, ascending).
pub fn rollout_loss<T: Real, P: ParamSource<T> + ?Sized>(
    sim: &Simulation,
    state: &mut State<T>,
    params: &P,
    steps: usize,
    targets: &[(usize, &VectorField<f64>)],
) -> Result<T> {
    if targets.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut grid = Grid::new(sim.spec);
    let mut loss = T::zero();
    let mut next = 0;
    for s in 1..=steps {
        mpm::step(sim, state, params, &mut grid)?;
        while next < targets.len() && targets[next].0 == s {
            let pred = mpm::velocity_field(state, &sim.spec)?;
            loss += field_mse(&pred, targets[next].1)?;
            next += 1;
        }
    }
    if next != targets.len() {
        return Err(Error::Invalid(format!("target offset {} lies beyond {steps} steps", targets[next].0)));
    }
    Ok(loss / targets.len() as f64)
}

/// Loss of one window with plain values.
pub fn window_loss(
    model: &ParamModel,
    sim: &Simulation,
    start: &State<f64>,
    steps: usize,
    targets: &[(usize, &VectorField<f64>)],
) -> Result<f64> {
    let mut state = start.clone();
    rollout_loss(sim, &mut state, &model.bind_f64(), steps, targets)
}

/// Loss of one window and its gradient with respect to every entry of
/// `θ` (zero for frozen entries), by reverse-mode differentiation through
/// the rollout.
pub fn window_gradient(
    model: &ParamModel,
    sim: &Simulation,
    start: &State<f64>,
    steps: usize,
    targets: &[(usize, &VectorField<f64>)],
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let theta: Vec<Var> = model
        .theta
        .iter()
        .zip(&model.frozen)
        .map(|(&v, &frozen)| if frozen { Var::constant(v) } else { tape.var(v) })
        .collect();
    let bound = model.bind(theta.clone());
    let mut state = start.lift::<Var>();
    let loss = rollout_loss(sim, &mut state, &bound, steps, targets)?;
    let grads = tape.backward(loss);
    let g: Vec<f64> = theta.iter().map(|&v| grads.wrt(v)).collect();
    if !loss.value().is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok((loss.value(), g))
}

/// Replaces particle velocities and affine gradients with the ones
/// implied by an observed node field.
pub fn force_velocities<T: Real>(state: &mut State<T>, field: &VectorField<f64>) -> Result<()> {
    let spec = field.spec;
    let scale = 4.0 / (spec.dx * spec.dx);
    for p in &mut state.particles {
        let st = stencil_for(p.x, &spec)?;
        let mut v = V2::<T>::zero();
        let mut b = M2::<T>::zero();
        for (node, w, off) in st.iter(&spec) {
            let vi: V2<T> = field.values[node].lift();
            v += vi.scale(w);
            b += vi.scale(w).outer(off);
        }
        p.v = v;
        p.c = b.scale_f(scale);
    }
    Ok(())
}

/// Number of state scalars carried per particle between windows.
const PARTICLE_DOF: usize = 12;

fn particle_vars(p: &Particle<f64>, tape: &Tape) -> Particle<Var> {
    let v = |x: f64| tape.var(x);
    let m = |a: &M2<f64>| M2 { m: [[v(a.m[0][0]), v(a.m[0][1])], [v(a.m[1][0]), v(a.m[1][1])]] };
    Particle {
        mass: p.mass,
        x: V2::new(v(p.x.x), v(p.x.y)),
        v: V2::new(v(p.v.x), v(p.v.y)),
        c: m(&p.c),
        f: m(&p.f),
        r_a: p.r_a,
        r_b: p.r_b,
        v0: p.v0,
    }
}

fn particle_scalars(p: &Particle<Var>) -> [Var; PARTICLE_DOF] {
    [
        p.x.x,
        p.x.y,
        p.v.x,
        p.v.y,
        p.c.m[0][0],
        p.c.m[0][1],
        p.c.m[1][0],
        p.c.m[1][1],
        p.f.m[0][0],
        p.f.m[0][1],
        p.f.m[1][0],
        p.f.m[1][1],
    ]
}

/// One window of a chained backward pass. Differentiates
/// `weight·loss + ⟨adjoint, end state⟩` with respect to `θ` and the start
/// state, so the adjoint returned here is the one to hand to the window
/// before. `adjoint` is ignored when its length does not match the end
/// state (a particle left the domain at a different step).
#[allow(clippy::too_many_arguments)]
fn chained_window(
    model: &ParamModel,
    sim: &Simulation,
    start: &State<f64>,
    steps: usize,
    targets: &[(usize, &VectorField<f64>)],
    forcing: Option<&VectorField<f64>>,
    weight: f64,
    adjoint: Option<&[f64]>,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let tape = Tape::new();
    let theta: Vec<Var> = model
        .theta
        .iter()
        .zip(&model.frozen)
        .map(|(&v, &frozen)| if frozen { Var::constant(v) } else { tape.var(v) })
        .collect();
    let bound = model.bind(theta.clone());
    let inputs: Vec<Particle<Var>> = start.particles.iter().map(|p| particle_vars(p, &tape)).collect();
    let mut state = State {
        particles: inputs.clone(),
        step: start.step,
        time: start.time,
        exited: start.exited,
        exited_mass: start.exited_mass,
    };
    if let Some(field) = forcing {
        force_velocities(&mut state, field)?;
    }
    let mut grid = Grid::new(sim.spec);
    let mut loss = Var::constant(0.0);
    let mut next = 0;
    for s in 1..=steps {
        mpm::step(sim, &mut state, &bound, &mut grid)?;
        while next < targets.len() && targets[next].0 == s {
            let pred = mpm::velocity_field(&state, &sim.spec)?;
            loss += field_mse(&pred, targets[next].1)?;
            next += 1;
        }
    }
    if !targets.is_empty() {
        loss = loss / targets.len() as f64;
    }
    let plain = loss.value();
    let mut objective = loss * weight;
    if let Some(adj) = adjoint.filter(|a| a.len() == state.particles.len() * PARTICLE_DOF) {
        for (p, a) in state.particles.iter().zip(adj.chunks(PARTICLE_DOF)) {
            for (v, &w) in particle_scalars(p).iter().zip(a) {
                if w != 0.0 {
                    objective += *v * w;
                }
            }
        }
    } else if adjoint.is_some() {
        log::debug!("particle count changed at a window boundary; adjoint dropped");
    }
    let grads = tape.backward(objective);
    let g: Vec<f64> = theta.iter().map(|&v| grads.wrt(v)).collect();
    let back: Vec<f64> = inputs.iter().flat_map(|p| particle_scalars(p).map(|v| grads.wrt(v))).collect();
    if !plain.is_finite() || g.iter().chain(&back).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok((plain, g, back))
}

fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    100
}
fn default_window() -> usize {
    12
}
fn default_batch() -> usize {
    4
}
fn default_decay() -> f64 {
    0.9
}
fn default_decay_epochs() -> f64 {
    50.0
}

/// Training configuration. All fields are optional in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial Adam learning rate.
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Rollout window length in steps.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Windows per optimizer step.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Fraction of frames (after the first) withheld from the loss.
    #[serde(default)]
    pub mask_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// The learning rate is multiplied by `lr_decay` every
    /// `lr_decay_epochs` epochs (continuously).
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_decay_epochs")]
    pub lr_decay_epochs: f64,
    /// Reset particle velocities from the observed field at each window
    /// start that coincides with an observed frame. Forced velocities are
    /// smoothed by the kernel, which biases fits on clean data.
    #[serde(default)]
    pub teacher_forcing: bool,
    /// Names of learnable parameters; everything else is frozen. `None`
    /// keeps the model's own mask.
    #[serde(default)]
    pub learn: Option<Vec<String>>,
    #[serde(default)]
    pub gradient: GradientMode,
}

/// How gradients cross window boundaries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Windows tile the sequence and are differentiated back to front,
    /// handing the start-state adjoint of each window to the one before.
    /// Memory stays bounded by one window while the gradient is that of the
    /// whole rollout. One optimizer step per epoch.
    #[default]
    Chained,
    /// Every window is an independent rollout from its start state;
    /// `batch` windows per optimizer step, differentiated in parallel.
    Truncated,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powf(epoch as f64 / self.lr_decay_epochs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("train config: {m}")));
        if !(self.lr > 0.0) {
            return bad("lr must be > 0");
        }
        if self.window == 0 || self.batch == 0 {
            return bad("window and batch must be >= 1");
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return bad("mask_fraction must be in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay_epochs > 0.0) {
            return bad("lr decay must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ParamModel,
    pub history: Vec<EpochRecord>,
    /// Supervised frame indices.
    pub mask: Vec<usize>,
    /// Epoch at which training stopped on a non-finite loss or a failed
    /// rollout; `model` then holds the last good parameters.
    pub diverged: Option<usize>,
}

/// Supervised frames: all but the first, minus a seeded random
/// `mask_fraction` of them (at least one is kept).
pub fn choose_mask(n_frames: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if n_frames < 2 {
        return Err(Error::EmptyMask);
    }
    let mut idx: Vec<usize> = (1..n_frames).collect();
    let drop = ((fraction * idx.len() as f64).round() as usize).min(idx.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_736b);
    idx.shuffle(&mut rng);
    let mut keep = idx[drop..].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

#[derive(Clone, Debug)]
struct Window {
    start: usize,
    steps: usize,
    /// `(offset, frame index)`.
    targets: Vec<(usize, usize)>,
}

/// Windows start at observed frames so that teacher forcing can restart
/// them; each covers the observed frames up to `window` steps ahead. A gap
/// longer than `window` is bridged by a window ending on the next frame.
fn make_windows(data: &TrainData, mask: &[usize], window: usize) -> Vec<Window> {
    let steps_of: Vec<usize> = mask.iter().map(|&i| data.frames[i].step).collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut k = 0;
    while k < mask.len() {
        let targets: Vec<(usize, usize)> = mask[k..]
            .iter()
            .zip(&steps_of[k..])
            .take_while(|&(_, &s)| s <= start + window)
            .map(|(&i, &s)| (s - start, i))
            .collect();
        if targets.is_empty() {
            start = steps_of[k] - window;
            continue;
        }
        k += targets.len();
        let steps = targets.last().map_or(0, |t| t.0);
        out.push(Window { start, steps, targets });
        start += steps;
    }
    out
}

/// Consecutive windows of `window` steps from step 0 to the last
/// supervised frame, including ones with nothing to supervise.
fn tiled_windows(data: &TrainData, mask: &[usize], window: usize) -> Vec<Window> {
    let end = mask.iter().map(|&i| data.frames[i].step).max().unwrap_or(0);
    let mut out = Vec::new();
    let mut start = 0;
    while start < end {
        let steps = window.min(end - start);
        let targets = mask
            .iter()
            .filter_map(|&i| {
                let s = data.frames[i].step;
                (s > start && s <= start + steps).then(|| (s - start, i))
            })
            .collect();
        out.push(Window { start, steps, targets });
        start += steps;
    }
    out
}

/// States at every window start from a plain rollout with the current
/// parameters, each with the observed frame to force it with, if any.
fn window_starts(
    model: &ParamModel,
    sim: &Simulation,
    init: &State<f64>,
    data: &TrainData,
    windows: &[Window],
    observed: &[bool],
    teacher_forcing: bool,
) -> Result<Vec<(State<f64>, Option<usize>)>> {
    let bound = model.bind_f64();
    let mut state = init.clone();
    let mut grid = Grid::new(sim.spec);
    let mut at = 0;
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        while at < w.start {
            mpm::step(sim, &mut state, &bound, &mut grid)?;
            at += 1;
        }
        let force = teacher_forcing
            .then(|| data.frames.iter().position(|f| f.step == w.start))
            .flatten()
            .filter(|&i| observed[i]);
        if let Some(i) = force {
            // Later windows restart from the forced state too.
            out.push((state.clone(), Some(i)));
            force_velocities(&mut state, &data.frames[i].field)?;
        } else {
            out.push((state.clone(), None));
        }
    }
    Ok(out)
}

/// Mean window loss and its exact gradient, windows differentiated back to
/// front with the start-state adjoint handed along.
fn chained_gradient(
    model: &ParamModel,
    sim: &Simulation,
    data: &TrainData,
    windows: &[Window],
    starts: &[(State<f64>, Option<usize>)],
) -> Result<(f64, Vec<f64>)> {
    let supervised = windows.iter().filter(|w| !w.targets.is_empty()).count().max(1);
    let weight = 1.0 / supervised as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.len()];
    let mut adjoint: Option<Vec<f64>> = None;
    for (w, (start, force)) in windows.iter().zip(starts).rev() {
        let targets: Vec<(usize, &VectorField<f64>)> =
            w.targets.iter().map(|&(o, i)| (o, &data.frames[i].field)).collect();
        let forcing = force.map(|i| &data.frames[i].field);
        let (l, g, back) = chained_window(model, sim, start, w.steps, &targets, forcing, weight, adjoint.as_deref())?;
        loss += l * weight;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        adjoint = Some(back);
    }
    Ok((loss, grad))
}

fn observed_frames(n: usize, mask: &[usize]) -> Vec<bool> {
    let mut observed = vec![false; n];
    observed[0] = true;
    for &i in mask {
        observed[i] = true;
    }
    observed
}

/// Training objective over the whole sequence: the mean over windows of
/// `window` steps of each window's mean field error at the supervised
/// frames `mask`, rolled out from `init` without restarts other than
/// optional velocity forcing.
pub fn sequence_loss(
    model: &ParamModel,
    sim: &Simulation,
    init: &State<f64>,
    data: &TrainData,
    mask: &[usize],
    window: usize,
    teacher_forcing: bool,
) -> Result<f64> {
    let windows = tiled_windows(data, mask, window.max(1));
    let observed = observed_frames(data.frames.len(), mask);
    let starts = window_starts(model, sim, init, data, &windows, &observed, teacher_forcing)?;
    let supervised = windows.iter().filter(|w| !w.targets.is_empty()).count();
    if supervised == 0 {
        return Err(Error::EmptyMask);
    }
    let mut total = 0.0;
    for (w, (start, force)) in windows.iter().zip(starts) {
        if w.targets.is_empty() {
            continue;
        }
        let mut s = start;
        if let Some(i) = force {
            force_velocities(&mut s, &data.frames[i].field)?;
        }
        let targets: Vec<(usize, &VectorField<f64>)> =
            w.targets.iter().map(|&(o, i)| (o, &data.frames[i].field)).collect();
        total += window_loss(model, sim, &s, w.steps, &targets)?;
    }
    Ok(total / supervised as f64)
}

/// [`sequence_loss`] and its gradient with respect to `θ`, exact across
/// window boundaries while holding only one window on a tape at a time.
pub fn sequence_gradient(
    model: &ParamModel,
    sim: &Simulation,
    init: &State<f64>,
    data: &TrainData,
    mask: &[usize],
    window: usize,
    teacher_forcing: bool,
) -> Result<(f64, Vec<f64>)> {
    let windows = tiled_windows(data, mask, window.max(1));
    if windows.iter().all(|w| w.targets.is_empty()) {
        return Err(Error::EmptyMask);
    }
    let observed = observed_frames(data.frames.len(), mask);
    let starts = window_starts(model, sim, init, data, &windows, &observed, teacher_forcing)?;
    chained_gradient(model, sim, data, &windows, &starts)
}

/// One Adam step; leaves `model` untouched if it would turn non-finite.
fn apply(adam: &mut Adam, model: &mut ParamModel, grad: &[f64], lr: f64) -> Result<()> {
    let mut next = model.theta.clone();
    adam.step(&mut next, grad, lr, &model.frozen);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    model.theta = next;
    Ok(())
}

/// Fits `model` to `data` starting from `init`.
pub fn train(
    data: &TrainData,
    sim: &Simulation,
    init: &State<f64>,
    mut model: ParamModel,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.spec != sim.spec {
        return Err(Error::DimMismatch("training data grid differs from the simulation grid".into()));
    }
    if init.particles.is_empty() {
        return Err(Error::Invalid("no particles to train with".into()));
    }
    if let Some(names) = &cfg.learn {
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        model.learn_only(&names)?;
    }
    let mask = choose_mask(data.frames.len(), cfg.mask_fraction, cfg.seed)?;
    let observed = observed_frames(data.frames.len(), &mask);
    let windows = match cfg.gradient {
        GradientMode::Chained => tiled_windows(data, &mask, cfg.window),
        GradientMode::Truncated => make_windows(data, &mask, cfg.window),
    };
    let supervised = windows.iter().filter(|w| !w.targets.is_empty()).count();
    if supervised == 0 {
        return Err(Error::EmptyMask);
    }

    let mut adam = Adam::new(model.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stop = |model: ParamModel, history: Vec<EpochRecord>, mask: Vec<usize>, epoch: usize, e: Error| {
        log::warn!("epoch {epoch}: {e}; stopping with the last good parameters");
        Ok(TrainOutcome { model, history, mask, diverged: Some(epoch) })
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let starts = match window_starts(&model, sim, init, data, &windows, &observed, cfg.teacher_forcing) {
            Ok(s) => s,
            Err(e) => return stop(model, history, mask, epoch, e),
        };
        let targets_of = |w: &Window| -> Vec<(usize, &VectorField<f64>)> {
            w.targets.iter().map(|&(o, i)| (o, &data.frames[i].field)).collect()
        };
        let mut epoch_loss = 0.0;
        match cfg.gradient {
            GradientMode::Chained => match chained_gradient(&model, sim, data, &windows, &starts) {
                Ok((l, grad)) => {
                    epoch_loss = l * supervised as f64;
                    if let Err(e) = apply(&mut adam, &mut model, &grad, lr) {
                        return stop(model, history, mask, epoch, e);
                    }
                }
                Err(e) => return stop(model, history, mask, epoch, e),
            },
            GradientMode::Truncated => {
                order.shuffle(&mut rng);
                for batch in order.chunks(cfg.batch) {
                    let results: Vec<Result<(f64, Vec<f64>)>> = batch
                        .par_iter()
                        .map(|&w| {
                            let (start, force) = &starts[w];
                            let mut s = start.clone();
                            if let Some(i) = force {
                                force_velocities(&mut s, &data.frames[*i].field)?;
                            }
                            window_gradient(&model, sim, &s, windows[w].steps, &targets_of(&windows[w]))
                        })
                        .collect();
                    let mut grad = vec![0.0; model.len()];
                    for r in results {
                        match r {
                            Ok((l, g)) => {
                                epoch_loss += l;
                                for (a, b) in grad.iter_mut().zip(&g) {
                                    *a += b / batch.len() as f64;
                                }
                            }
                            Err(e) => return stop(model, history, mask, epoch, e),
                        }
                    }
                    if let Err(e) = apply(&mut adam, &mut model, &grad, lr) {
                        return stop(model, history, mask, epoch, e);
                    }
                }
            }
        }
        let loss = epoch_loss / supervised as f64;
        log::debug!("epoch {epoch}: loss {loss:.6e}, lr {lr:.3e}");
        history.push(EpochRecord { epoch, loss, lr });
    }
    Ok(TrainOutcome { model, history, mask, diverged: None })
}

/// Predicted node fields at every data frame from one plain rollout.
pub fn predict_fields(
    model: &ParamModel,
    sim: &Simulation,
    init: &State<f64>,
    data: &TrainData,
) -> Result<Vec<VectorField<f64>>> {
    let bound = model.bind_f64();
    let mut state = init.clone();
    let mut grid = Grid::new(sim.spec);
    let mut at = 0;
    let mut out = Vec::with_capacity(data.frames.len());
    for f in &data.frames {
        while at < f.step {
            mpm::step(sim, &mut state, &bound, &mut grid)?;
            at += 1;
        }
        out.push(mpm::velocity_field(&state, &sim.spec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_keeps_at_least_one_frame() {
        assert_eq!(choose_mask(5, 0.0, 1).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(choose_mask(5, 0.5, 1).unwrap().len(), 2);
        assert_eq!(choose_mask(3, 0.99, 1).unwrap().len(), 1);
        assert!(matches!(choose_mask(1, 0.0, 1), Err(Error::EmptyMask)));
    }

    #[test]
    fn config_defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.epochs, c.window, c.batch), (1e-4, 100, 12, 4));
        assert!((c.lr_at(50) - 0.9e-4).abs() < 1e-18);
    }
}
