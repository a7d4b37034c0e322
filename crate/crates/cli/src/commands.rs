//! Batch commands: simulate, train, analyze and flow utilities.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use crowdmpm::analyze::{self, curl_map, divergence_map, heatmap_scale, write_heatmap, GroundTruth};
use crowdmpm::field_io::{read_field, scalar_to_csv, vector_to_csv, write_vector, AnyField};
use crowdmpm::flow::{field_to_flow, flow_to_field, inject_noise, FlowSequence, NoiseSpec};
use crowdmpm::learn::{fit_flows, FitConfig};
use crowdmpm::scenario::{self, RunInfo, Scenario};
use crowdmpm::{Error, ScalarField};
use serde_json::json;

pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Runtime failures that mean the scenario blew up rather than being
/// malformed.
pub fn is_instability(e: &Error) -> bool {
    matches!(
        e,
        Error::StabilityViolation { .. }
            | Error::NonFiniteForce { .. }
            | Error::NonFiniteField { .. }
            | Error::OutOfDomain { .. }
    )
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidScenario(_) => EXIT_INVALID,
            e if is_instability(e) => EXIT_UNSTABLE,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<Error>() {
            Ok(core) => core.into(),
            Err(e) => Failure { code: 1, message: format!("{e:#}") },
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

#[derive(Clone, Debug, Default)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub deterministic: bool,
}

pub fn simulate(args: &SimulateArgs) -> CmdResult<serde_json::Value> {
    let mut sc = Scenario::load(&args.scenario)?;
    if let Some(n) = args.steps {
        sc.steps = n;
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if args.deterministic {
        sc.deterministic = true;
    }
    sc.validate().map_err(Error::InvalidScenario)?;
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let tenth = (sc.steps / 10).max(1);
    let summary = scenario::run(&sc, base, &args.out, &mut |p| {
        if p.step % tenth == 0 {
            log::info!("step {}/{} ({} frames)", p.step, p.steps, p.frames);
        }
        true
    })?;
    Ok(json!({
        "frames": summary.frames,
        "steps": summary.steps,
        "exited": summary.exited,
        "peak_stress": summary.report.peak_stress,
        "conservation_violation": summary.report.conservation_violation,
        "out": args.out,
    }))
}

pub fn train(flows: &Path, config: Option<&Path>, out: &Path) -> CmdResult<serde_json::Value> {
    let seq = FlowSequence::load(flows)?;
    let cfg: FitConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FitConfig::default(),
    };
    cfg.train.validate()?;
    let fit = fit_flows(&seq, &cfg)?;
    fit.model.save(out)?;
    let history = out.with_extension("history.json");
    std::fs::write(&history, serde_json::to_vec_pretty(&fit.history).context("history")?)
        .with_context(|| format!("writing {}", history.display()))?;
    if let Some(e) = fit.diverged {
        log::warn!("training diverged at epoch {e}; saved the last good parameters");
    }
    let mut physical = serde_json::Map::new();
    for name in ["eps", "k", "alpha", "beta", "d_l", "d1", "d2", "noise_sigma"] {
        if let Ok(v) = fit.model.physical(name) {
            physical.insert(name.into(), json!(v));
        }
    }
    Ok(json!({
        "particles": fit.particles,
        "epochs": fit.history.len(),
        "final_loss": fit.history.last().map(|r| r.loss),
        "diverged": fit.diverged,
        "err_vel": fit.err_vel,
        "err_flow": fit.err_flow,
        "parameters": physical,
        "model": out,
        "history": history,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Curl,
    Div,
    Stress,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Curl => "curl",
            Op::Div => "div",
            Op::Stress => "stress",
        }
    }
}

fn scalar(path: &Path) -> anyhow::Result<ScalarField<f64>> {
    match read_field(path)? {
        AnyField::Scalar(s) => Ok(s),
        AnyField::Vector(_) => anyhow::bail!("{} holds a vector field", path.display()),
    }
}

fn vector(path: &Path) -> anyhow::Result<crowdmpm::VectorField<f64>> {
    match read_field(path)? {
        AnyField::Vector(v) => Ok(v),
        AnyField::Scalar(_) => anyhow::bail!("{} holds a scalar field", path.display()),
    }
}

/// Writes one CSV and one PNG per frame of `run` plus the run report. All
/// PNGs share one color scale so frames are comparable.
pub fn analyze(run: &Path, op: Op, out: &Path, normalized: bool, truth: Option<&Path>) -> CmdResult<serde_json::Value> {
    let info = RunInfo::load(run)?;
    if info.frames == 0 {
        return Err(Error::MissingFrames(run.to_path_buf()).into());
    }
    let maps = (0..info.frames)
        .map(|n| -> anyhow::Result<ScalarField<f64>> {
            Ok(match op {
                Op::Curl => curl_map(&vector(&scenario::velocity_path(run, n))?, normalized)?,
                Op::Div => divergence_map(&vector(&scenario::velocity_path(run, n))?, normalized)?,
                Op::Stress => scalar(&scenario::stress_path(run, n))?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let scale = maps.iter().map(heatmap_scale).fold(0.0, f64::max);
    for (n, m) in maps.iter().enumerate() {
        let stem = format!("{}_{n:05}", op.name());
        std::fs::write(out.join(format!("{stem}.csv")), scalar_to_csv(m)).context("writing csv")?;
        write_heatmap(&out.join(format!("{stem}.png")), m, Some(scale))?;
    }
    let report = analyze::report(run, truth.map(GroundTruth::Run))?;
    analyze::write_report(out, &report)?;
    Ok(json!({
        "op": op.name(),
        "frames": maps.len(),
        "scale": scale,
        "peak_stress": report.peak_stress,
        "err_vel": report.err_vel,
        "err_flow": report.err_flow,
        "out": out,
    }))
}

/// Grid velocity fields of every frame of a flow sequence, as CSV and
/// binary dumps.
pub fn flow_to_fields(flows: &Path, out: &Path) -> CmdResult<serde_json::Value> {
    let seq = FlowSequence::load(flows)?;
    let spec = seq.grid()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (n, f) in seq.frames.iter().enumerate() {
        let field = flow_to_field(f, &spec)?;
        std::fs::write(out.join(format!("field_{n:05}.csv")), vector_to_csv(&field)).context("writing csv")?;
        write_vector(&out.join(format!("field_{n:05}.cmf")), &field)?;
    }
    Ok(json!({ "frames": seq.frames.len(), "nx": spec.nx, "ny": spec.ny, "out": out }))
}

/// The velocity fields of a run directory sampled back to per-pixel flow,
/// written as a `.flo` sequence with one frame per run frame.
pub fn run_to_flows(run: &Path, out: &Path) -> CmdResult<serde_json::Value> {
    let info = RunInfo::load(run)?;
    let fields = analyze::run_velocity_fields(run)?;
    // Timestamps are simulation times, so a training scene with the run's
    // dt maps every frame back onto its step.
    let frame_steps = scenario::frame_steps(info.steps, info.snapshot_every);
    let frames = fields
        .iter()
        .zip(&frame_steps)
        .map(|(f, &s)| field_to_flow(f, info.width, info.height, s as f64 * info.dt))
        .collect::<crowdmpm::Result<Vec<_>>>()?;
    let seq = FlowSequence::new(frames, info.dx)?;
    let manifest = seq.save(out)?;
    Ok(json!({ "frames": seq.frames.len(), "manifest": manifest }))
}

pub fn flow_noise(flows: &Path, spec: &NoiseSpec, seed: u64, out: &Path) -> CmdResult<serde_json::Value> {
    let seq = FlowSequence::load(flows)?;
    let frames = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| inject_noise(f, spec, seed.wrapping_add(i as u64)))
        .collect::<crowdmpm::Result<Vec<_>>>()?;
    let noisy = FlowSequence::new(frames, seq.dx)?;
    let manifest = noisy.save(out)?;
    Ok(json!({ "frames": noisy.frames.len(), "manifest": manifest, "noise": spec }))
}
