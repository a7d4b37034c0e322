//! End-to-end checks across modules: training behavior, stress maps of a
//! simulated crowd, and run reports.

mod common;

use common::{cluster, free_sim, head_on_pair, oracle_data, rich_active};
use crowdmpm::analyze::{report, stress_map, GroundTruth};
use crowdmpm::flow::{field_to_flow, inject_noise, FlowSequence, NoiseSpec};
use crowdmpm::learn::model::ParamModel;
use crowdmpm::learn::{train, window_gradient, TrainConfig, TrainData};
use crowdmpm::scenario::{run, snapshot_path, RunInfo, Scenario};
use crowdmpm::snapshot::{encode_particles, read_snapshot};
use crowdmpm::{ActiveParams, Error, V2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn masked_training_losses_are_comparable() {
    // Flow-derived supervision with a little noise, so every fit bottoms
    // out at a common noise floor instead of racing towards zero.
    let sim = free_sim(1.0);
    let init = cluster(25, 7);
    let inert = ActiveParams::default();
    let clean = oracle_data(&ParamModel::global(5.0, 1.0, &inert), &sim, &init, 48, 2);
    let frames = clean
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let flow = field_to_flow(&f.field, 80, 80, f.t).unwrap();
            inject_noise(&flow, &NoiseSpec::Gaussian { std: 0.1 }, 500 + i as u64).unwrap()
        })
        .collect();
    let data = TrainData::from_sequence(&FlowSequence::new(frames, sim.spec.dx).unwrap(), 1.0).unwrap();
    let mut finals = Vec::new();
    for mask in [0.0, 0.5, 0.7] {
        let mut m = ParamModel::global(1.0, 1.0, &inert);
        m.learn_only(&["eps"]).unwrap();
        let cfg = TrainConfig { lr: 0.1, epochs: 100, mask_fraction: mask, ..Default::default() };
        let out = train(&data, &sim, &init, m, &cfg).unwrap();
        let h: Vec<f64> = out.history.iter().map(|r| r.loss).collect();
        assert!(median(h[90..].to_vec()) < median(h[..10].to_vec()), "mask {mask}: loss did not trend down");
        finals.push(*h.last().unwrap());
    }
    let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finals.iter().copied().fold(0.0, f64::max);
    assert!(hi <= 2.0 * lo, "final losses {finals:?}");
}

#[test]
fn deterministic_training_is_reproducible() {
    let sim = free_sim(1.0);
    let init = head_on_pair();
    let data = oracle_data(&ParamModel::global(5.0, 3.0, &ActiveParams::default()), &sim, &init, 20, 1);
    let fit = || {
        let mut m = ParamModel::global(5.0, 1.0, &ActiveParams { alpha: 0.01, beta: 0.1, ..Default::default() });
        m.learn_only(&["k", "alpha", "beta"]).unwrap();
        let cfg = TrainConfig { lr: 0.05, epochs: 15, mask_fraction: 0.5, seed: 4, ..Default::default() };
        train(&data, &sim, &init, m, &cfg).unwrap()
    };
    let (a, b) = (fit(), fit());
    assert_eq!(a.model.theta, b.model.theta);
    assert_eq!(a.history, b.history);
}

#[test]
fn dead_parameter_has_zero_gradient() {
    // Sparse particles never enter the comfort band, so k has no effect.
    let sim = free_sim(1.0);
    let init = crowdmpm::State::new(
        (0..5)
            .map(|i| {
                crowdmpm::Particle::new(
                    V2::new(20.0 + 10.0 * i as f64, 40.0),
                    V2::new(0.05 * i as f64 - 0.1, 0.05),
                    2.0,
                    3.5,
                )
            })
            .collect(),
    );
    let truth = ParamModel::global(5.0, 1.0, &ActiveParams::default());
    let targets = common::rollout_fields(&truth, &sim, &init, 3);
    let t: Vec<_> = targets.iter().enumerate().map(|(i, f)| (i + 1, f)).collect();
    let guess = ParamModel::global(2.0, 2.0, &ActiveParams::default());
    let (_, grad) = window_gradient(&guess, &sim, &init, 3, &t).unwrap();
    let k = guess.indices_of("k").unwrap()[0];
    assert!(grad[k].abs() <= 1e-12, "dk = {}", grad[k]);
    assert!(grad[guess.indices_of("eps").unwrap()[0]].abs() > 0.0);
}

#[test]
fn alpha_gradient_sign_matches_finite_differences() {
    let sim = free_sim(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for scene in 0..20 {
        let init = cluster(10, 100 + scene);
        let mut a = rich_active(scene);
        a.alpha = rng.random_range(-0.05..0.05);
        let truth = ParamModel::global(4.0, 1.0, &a);
        let targets = common::rollout_fields(&truth, &sim, &init, 6);
        let t: Vec<_> = targets.iter().enumerate().map(|(i, f)| (i + 1, f)).collect();
        a.alpha += rng.random_range(0.01..0.04) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let guess = ParamModel::global(4.0, 1.0, &a);
        let (_, grad) = window_gradient(&guess, &sim, &init, 6, &t).unwrap();
        let i = guess.indices_of("alpha").unwrap()[0];
        let h = 1e-4 * guess.theta[i].abs() + 1e-6;
        let loss = |d: f64| {
            let mut m = guess.clone();
            m.theta[i] += d;
            crowdmpm::learn::window_loss(&m, &sim, &init, 6, &t).unwrap()
        };
        let fd = (loss(h) - loss(-h)) / (2.0 * h);
        assert_eq!(grad[i].signum(), fd.signum(), "scene {scene}: {} vs {fd}", grad[i]);
    }
}

const WALL_PUSH: &str = r#"{
    "domain": {"width": 100, "height": 80},
    "dx": 4,
    "spawns": [{"region": {"min": [10, 16], "max": [60, 64]}, "count": 90, "r_a": 2, "r_b": 3.5}],
    "body_force": {"kind": "goal", "goal": [140, 40], "speed": 0.8},
    "dt": 0.5,
    "steps": 300,
    "snapshot_every": 300,
    "seed": 5
}"#;

#[test]
fn crowd_pushed_against_a_wall_peaks_at_the_wall() {
    let sc = Scenario::from_json(WALL_PUSH).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(&sc, dir.path(), dir.path(), &mut |_| true).unwrap();
    let (_, state) = read_snapshot(&snapshot_path(dir.path(), 1)).unwrap();
    let sim = sc.simulation().unwrap();
    let map = stress_map(&state.particles, &sc.params(dir.path()).unwrap(), &sim.spec).unwrap();
    let (best, _) = map.values.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let x = sim.spec.node_pos(best % sim.spec.nx, best / sim.spec.nx).x;
    assert!((100.0 - x).abs() <= 2.0 * sc.dx, "peak at x = {x}");
}

fn small_run(dir: &std::path::Path) -> Scenario {
    let mut sc = Scenario::from_json(WALL_PUSH).unwrap();
    sc.steps = 20;
    sc.snapshot_every = 5;
    run(&sc, dir, dir, &mut |_| true).unwrap();
    sc
}

#[test]
fn report_against_itself_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    small_run(dir.path());
    let r = report(dir.path(), Some(GroundTruth::Run(dir.path()))).unwrap();
    assert_eq!((r.err_vel, r.err_flow), (Some(0.0), Some(0.0)));
    assert_eq!(r.frames.len(), RunInfo::load(dir.path()).unwrap().frames);
    assert!(!r.conservation_violation);
    assert!(r.peak_stress > 0.0);
}

#[test]
fn report_flags_mass_drift() {
    let dir = tempfile::tempdir().unwrap();
    small_run(dir.path());
    let manifest = snapshot_path(dir.path(), 2);
    let (m, mut state) = read_snapshot(&manifest).unwrap();
    state.particles[0].mass *= 1.0 + 1e-6;
    std::fs::write(manifest.parent().unwrap().join(&m.particles), encode_particles(&state.particles)).unwrap();
    let r = report(dir.path(), None).unwrap();
    assert!(r.conservation_violation && r.mass_drift > 1e-9, "drift {}", r.mass_drift);
}

#[test]
fn report_needs_frames() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(dir.path(), None), Err(Error::MissingFrames(_))));
}
