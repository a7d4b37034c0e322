//! Scenes shared by the benchmarks.

use crowdmpm::learn::model::ParamModel;
use crowdmpm::learn::TrainData;
use crowdmpm::{ActiveParams, FixedParams, Geometry, Particle, Simulation, State, StepConfig, V2};

/// Every force term switched on, with a little noise.
pub fn active() -> ActiveParams {
    ActiveParams { alpha: 0.04, beta: 0.2, d_l: 0.3, d1: 0.25, d2: 0.4, noise_sigma: 0.05, seed: 1 }
}

pub fn params() -> FixedParams {
    FixedParams::new(3.0, 1.0, active())
}

/// `n` particles on a jittered lattice in a closed box sized to hold them.
pub fn crowd(n: usize) -> (Simulation, State<f64>) {
    let cols = (n as f64).sqrt().ceil() as usize;
    let side = 40.0 + 5.5 * cols as f64;
    let cfg = StepConfig { dt: 0.5, gamma: 0.9, deterministic: true, seed: 7 };
    let sim = Simulation::new(Geometry::open_box(side, side), 4.0, cfg).expect("valid box");
    let particles = (0..n)
        .map(|i| {
            let (cx, cy) = ((i % cols) as f64, (i / cols) as f64);
            let jitter = ((i * 7919) % 100) as f64 / 100.0 - 0.5;
            let x = V2::new(20.0 + 5.5 * cx + 0.4 * jitter, 20.0 + 5.5 * cy - 0.4 * jitter);
            let v = V2::new(0.3 * jitter, 0.2 - 0.1 * jitter);
            Particle::new(x, v, 2.0, 3.5)
        })
        .collect();
    (sim, State::new(particles))
}

/// A short self-generated training sequence over `crowd(n)`.
pub fn oracle(n: usize, steps: usize) -> (Simulation, State<f64>, TrainData) {
    let (sim, init) = crowd(n);
    let truth = ParamModel::global(5.0, 1.0, &ActiveParams::default());
    let bound = truth.bind_f64();
    let mut s = init.clone();
    let mut g = sim.new_grid();
    let mut frames = vec![(0.0, crowdmpm::mpm::velocity_field(&s, &sim.spec).expect("field"))];
    for k in 1..=steps {
        crowdmpm::mpm::step(&sim, &mut s, &bound, &mut g).expect("stable");
        frames.push((k as f64 * sim.config.dt, crowdmpm::mpm::velocity_field(&s, &sim.spec).expect("field")));
    }
    let data = TrainData::from_fields(sim.spec, frames, sim.config.dt).expect("frames");
    (sim, init, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_step() {
        let (sim, mut s) = crowd(75);
        let mut g = sim.new_grid();
        crowdmpm::mpm::step(&sim, &mut s, &params(), &mut g).unwrap();
        assert_eq!(s.particles.len(), 75);
        let (_, _, data) = oracle(10, 4);
        assert_eq!(data.frames.len(), 5);
    }
}
