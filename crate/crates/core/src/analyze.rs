//! Curl, divergence and stress maps over simulated or observed fields,
//! heatmap export, and the per-run metrics report.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_io::{read_field, AnyField};
use crate::flow::{field_to_flow, flow_to_field, FlowSequence};
use crate::geometry::Geometry;
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::learn::{err_flow, err_vel};
use crate::linalg::V2;
use crate::material::build_neighbors;
use crate::mpm::{scatter, scatter_weighted, stencils, Particle};
use crate::ops;
use crate::params::ParamSource;
use crate::scenario::{self, RunInfo};
use crate::snapshot::{list_snapshots, read_snapshot};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Vectors shorter than this are left at zero when unitizing.
pub const NORMALIZE_EPS: f64 = 1e-9;

/// Relative mass drift above which a run is flagged.
pub const MASS_DRIFT_TOLERANCE: f64 = 1e-9;

/// Cells beyond half the exit length that still count as the exit region.
pub const EXIT_REGION_CELLS: f64 = 4.0;

/// How the stress map reduces the stress state to one number per node.
pub const STRESS_COMPOSITION: &str = "frobenius(sum_p w_ip eps_p (1 - 1/J_p) I) + |sum_p w_ip f_pair_p|";

/// Each node vector scaled to unit length; vectors shorter than
/// [`NORMALIZE_EPS`] become zero.
pub fn normalize(field: &VectorField<f64>) -> VectorField<f64> {
    field.map(|v| {
        let n = v.norm();
        if n > NORMALIZE_EPS {
            v.scale(1.0 / n)
        } else {
            V2::new(0.0, 0.0)
        }
    })
}

pub fn curl_map(field: &VectorField<f64>, normalized: bool) -> Result<ScalarField<f64>> {
    if normalized {
        ops::curl(&normalize(field))
    } else {
        ops::curl(field)
    }
}

pub fn divergence_map(field: &VectorField<f64>, normalized: bool) -> Result<ScalarField<f64>> {
    if normalized {
        ops::divergence(&normalize(field))
    } else {
        ops::divergence(field)
    }
}

/// Per-node stress magnitude; see [`STRESS_COMPOSITION`].
pub fn stress_map<P: ParamSource<f64> + ?Sized>(
    particles: &[Particle<f64>],
    params: &P,
    spec: &GridSpec,
) -> Result<ScalarField<f64>> {
    if particles.is_empty() {
        return Ok(ScalarField::zeros(*spec));
    }
    let st = stencils(particles, spec)?;
    let nb = build_neighbors(particles);
    let resolved = params.resolve(particles, &nb)?;
    let iso = scatter(spec, &st, true, |p, a, b| {
        let j = particles[p].j();
        [st[p].weights[a][b] * resolved.eps[p] * (1.0 - 1.0 / j)]
    });
    let (pair, _) = crate::material::pair_forces(particles, &nb, &resolved.k);
    let pair_nodes = scatter_weighted(spec, &st, true, &pair);
    let values = iso.iter().zip(&pair_nodes).map(|([s], f)| std::f64::consts::SQRT_2 * s.abs() + f.norm()).collect();
    Ok(ScalarField { spec: *spec, values })
}

/// Largest value over nodes within `radius` of `center`.
pub fn region_peak(field: &ScalarField<f64>, center: V2<f64>, radius: f64) -> f64 {
    let s = field.spec;
    let mut peak = 0.0f64;
    for j in 0..s.ny {
        for i in 0..s.nx {
            if (s.node_pos(i, j) - center).norm() <= radius {
                peak = peak.max(field.at(i, j));
            }
        }
    }
    peak
}

/// Peak over the nodes near any exit, inside the domain.
pub fn exit_region_peak(field: &ScalarField<f64>, geometry: &Geometry) -> Option<f64> {
    if geometry.exits.is_empty() {
        return None;
    }
    let s = field.spec;
    let mut peak = 0.0f64;
    for e in &geometry.exits {
        let c = e.midpoint();
        let r = 0.5 * e.length() + EXIT_REGION_CELLS * s.dx;
        for j in 0..s.ny {
            for i in 0..s.nx {
                let x = s.node_pos(i, j);
                if geometry.contains(x) && (x - c).norm() <= r {
                    peak = peak.max(field.at(i, j));
                }
            }
        }
    }
    Some(peak)
}

/// Diverging blue-white-red colormap over `t ∈ [-1, 1]`.
pub fn diverging_rgb(t: f64) -> [u8; 3] {
    const NEG: [f64; 3] = [59.0, 76.0, 192.0];
    const POS: [f64; 3] = [180.0, 4.0, 38.0];
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t < 0.0 { NEG } else { POS };
    let a = t.abs();
    let mix = |c: f64| (255.0 * (1.0 - a) + c * a).round() as u8;
    [mix(end[0]), mix(end[1]), mix(end[2])]
}

/// Symmetric color scale for a map: its largest magnitude, or 1 for an
/// all-zero map.
pub fn heatmap_scale(field: &ScalarField<f64>) -> f64 {
    let m = field.max_abs();
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// Renders a map with one `cell × cell` block per node, image rows
/// following grid rows. `scale` defaults to [`heatmap_scale`].
pub fn heatmap(field: &ScalarField<f64>, scale: Option<f64>, cell: u32) -> RgbImage {
    let s = field.spec;
    let scale = scale.unwrap_or_else(|| heatmap_scale(field));
    let cell = cell.max(1);
    RgbImage::from_fn(s.nx as u32 * cell, s.ny as u32 * cell, |x, y| {
        let v = field.at((x / cell) as usize, (y / cell) as usize);
        Rgb(diverging_rgb(v / scale))
    })
}

pub fn write_heatmap(path: &Path, field: &ScalarField<f64>, scale: Option<f64>) -> Result<()> {
    heatmap(field, scale, 4).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub step: u64,
    pub time: f64,
    pub count: usize,
    pub mass: f64,
    pub exited: usize,
    pub exited_mass: f64,
    pub momentum: [f64; 2],
    pub peak_stress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_exit_stress: Option<f64>,
    pub peak_curl: f64,
    pub min_divergence: f64,
    pub max_divergence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub frames: Vec<FrameMetrics>,
    pub initial_mass: f64,
    /// Largest `|mass + exited mass − initial mass| / initial mass`.
    pub mass_drift: f64,
    pub conservation_violation: bool,
    pub peak_stress: f64,
    pub peak_curl: f64,
    pub min_divergence: f64,
    pub max_divergence: f64,
    pub total_exited: usize,
    pub stress_composition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_vel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_flow: Option<f64>,
}

/// Reference data for error metrics.
#[derive(Clone, Copy, Debug)]
pub enum GroundTruth<'a> {
    /// Another run directory, compared frame by frame.
    Run(&'a Path),
    /// Observed flows, one per run frame.
    Flows(&'a FlowSequence),
}

fn read_vector(path: &Path) -> Result<VectorField<f64>> {
    match read_field(path)? {
        AnyField::Vector(v) => Ok(v),
        AnyField::Scalar(_) => Err(Error::Invalid(format!("{path:?} holds a scalar field"))),
    }
}

fn read_scalar(path: &Path) -> Result<ScalarField<f64>> {
    match read_field(path)? {
        AnyField::Scalar(v) => Ok(v),
        AnyField::Vector(_) => Err(Error::Invalid(format!("{path:?} holds a vector field"))),
    }
}

/// Velocity fields of every frame of a run, in order.
pub fn run_velocity_fields(run_dir: &Path) -> Result<Vec<VectorField<f64>>> {
    let info = RunInfo::load(run_dir)?;
    if info.frames == 0 {
        return Err(Error::MissingFrames(run_dir.to_path_buf()));
    }
    (0..info.frames).map(|n| read_vector(&scenario::velocity_path(run_dir, n))).collect()
}

/// Metrics of a completed run directory.
pub fn report(run_dir: &Path, truth: Option<GroundTruth<'_>>) -> Result<Report> {
    let snaps = list_snapshots(&run_dir.join(scenario::FRAMES_DIR)).unwrap_or_default();
    if snaps.is_empty() || !run_dir.join(scenario::RUN_INFO).exists() {
        return Err(Error::MissingFrames(run_dir.to_path_buf()));
    }
    let info = RunInfo::load(run_dir)?;
    let mut frames = Vec::with_capacity(snaps.len());
    let mut velocities = Vec::with_capacity(snaps.len());
    for (n, path) in snaps.iter().enumerate() {
        let (m, state) = read_snapshot(path)?;
        let vel = read_vector(&scenario::velocity_path(run_dir, n))?;
        let stress = read_scalar(&scenario::stress_path(run_dir, n))?;
        let curl = curl_map(&vel, false)?;
        let div = divergence_map(&vel, false)?;
        let p = state.total_momentum();
        frames.push(FrameMetrics {
            frame: n,
            step: m.step,
            time: m.time,
            count: m.count,
            mass: state.total_mass(),
            exited: m.exited,
            exited_mass: m.exited_mass,
            momentum: [p.x, p.y],
            peak_stress: stress.max().max(0.0),
            peak_exit_stress: exit_region_peak(&stress, &info.geometry),
            peak_curl: curl.max_abs(),
            min_divergence: div.min(),
            max_divergence: div.max(),
        });
        velocities.push(vel);
    }
    let m0 = frames[0].mass + frames[0].exited_mass;
    let mass_drift = frames
        .iter()
        .map(|f| if m0 > 0.0 { (f.mass + f.exited_mass - m0).abs() / m0 } else { 0.0 })
        .fold(0.0, f64::max);
    let fold = |f: fn(&FrameMetrics) -> f64, init: f64, op: fn(f64, f64) -> f64| frames.iter().map(f).fold(init, op);

    let (err_v, err_f) = match truth {
        None => (None, None),
        Some(GroundTruth::Run(other)) => {
            let gt = run_velocity_fields(other)?;
            let to_flows = |fs: &[VectorField<f64>]| -> Result<Vec<_>> {
                fs.iter().enumerate().map(|(n, f)| field_to_flow(f, info.width, info.height, n as f64)).collect()
            };
            (Some(err_vel(&velocities, &gt)?), Some(err_flow(&to_flows(&velocities)?, &to_flows(&gt)?)?))
        }
        Some(GroundTruth::Flows(seq)) => {
            if seq.frames.len() != velocities.len() {
                return Err(Error::DimMismatch(format!(
                    "{} ground-truth flows for {} run frames",
                    seq.frames.len(),
                    velocities.len()
                )));
            }
            let spec = velocities[0].spec;
            let gt: Vec<_> = seq.frames.iter().map(|f| flow_to_field(f, &spec)).collect::<Result<_>>()?;
            let pred: Vec<_> = velocities
                .iter()
                .zip(&seq.frames)
                .map(|(v, f)| field_to_flow(v, f.width, f.height, f.t))
                .collect::<Result<_>>()?;
            (Some(err_vel(&velocities, &gt)?), Some(err_flow(&pred, &seq.frames)?))
        }
    };

    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        initial_mass: m0,
        mass_drift,
        conservation_violation: mass_drift > MASS_DRIFT_TOLERANCE,
        peak_stress: fold(|f| f.peak_stress, 0.0, f64::max),
        peak_curl: fold(|f| f.peak_curl, 0.0, f64::max),
        min_divergence: fold(|f| f.min_divergence, f64::INFINITY, f64::min),
        max_divergence: fold(|f| f.max_divergence, f64::NEG_INFINITY, f64::max),
        total_exited: frames.last().map_or(0, |f| f.exited),
        stress_composition: STRESS_COMPOSITION.to_string(),
        frames,
        err_vel: err_v,
        err_flow: err_f,
    })
}

pub fn write_report(run_dir: &Path, report: &Report) -> Result<()> {
    std::fs::write(run_dir.join(scenario::REPORT_FILE), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}
