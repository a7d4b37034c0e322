#![allow(dead_code)]

use crowdmpm::learn::model::ParamModel;
use crowdmpm::{ActiveParams, Particle, Simulation, State, StepConfig, VectorField, V2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random cluster of `n` particles around the middle of an 80×80 free
/// domain, packed tightly enough that pairs sit inside the comfort band.
pub fn cluster(n: usize, seed: u64) -> State<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (n as f64).sqrt().ceil() as usize;
    let particles = (0..n)
        .map(|i| {
            let (cx, cy) = ((i % cols) as f64, (i / cols) as f64);
            let x =
                V2::new(30.0 + 5.2 * cx + rng.random_range(-0.4..0.4), 30.0 + 5.2 * cy + rng.random_range(-0.4..0.4));
            let toward = (V2::new(40.0, 40.0) - x).scale(0.02);
            let v = toward + V2::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
            Particle::new(x, v, 2.0, 3.5)
        })
        .collect();
    State::new(particles)
}

pub fn free_sim(dt: f64) -> Simulation {
    Simulation::unbounded(80.0, 80.0, 4.0, StepConfig { dt, gamma: 0.9, deterministic: true, seed: 0 }).unwrap()
}

pub fn rich_active(seed: u64) -> ActiveParams {
    ActiveParams { alpha: 0.04, beta: 0.2, d_l: 0.3, d1: 0.25, d2: 0.4, noise_sigma: 0.05, seed }
}

/// Node fields after each of `steps` steps under `model`.
pub fn rollout_fields(model: &ParamModel, sim: &Simulation, init: &State<f64>, steps: usize) -> Vec<VectorField<f64>> {
    let bound = model.bind_f64();
    let mut s = init.clone();
    let mut g = sim.new_grid();
    (0..steps)
        .map(|_| {
            crowdmpm::mpm::step(sim, &mut s, &bound, &mut g).unwrap();
            crowdmpm::mpm::velocity_field(&s, &sim.spec).unwrap()
        })
        .collect()
}

/// Training data from a rollout under `model`: the initial field and then
/// every `every`-th step, up to `steps`.
pub fn oracle_data(
    model: &ParamModel,
    sim: &Simulation,
    init: &State<f64>,
    steps: usize,
    every: usize,
) -> crowdmpm::learn::TrainData {
    let fields = rollout_fields(model, sim, init, steps);
    let mut frames = vec![(0.0, crowdmpm::mpm::velocity_field(init, &sim.spec).unwrap())];
    frames
        .extend(fields.into_iter().enumerate().filter(|(i, _)| (i + 1) % every == 0).map(|(i, f)| ((i + 1) as f64, f)));
    crowdmpm::learn::TrainData::from_fields(sim.spec, frames, sim.config.dt).unwrap()
}

/// Two particles closing head-on, slightly offset, so the pair enters the
/// comfort band and pushes back.
pub fn head_on_pair() -> State<f64> {
    State::new(vec![
        Particle::new(V2::new(35.0, 40.0), V2::new(0.4, 0.0), 2.0, 3.5),
        Particle::new(V2::new(45.0, 40.3), V2::new(-0.4, 0.0), 2.0, 3.5),
    ])
}
