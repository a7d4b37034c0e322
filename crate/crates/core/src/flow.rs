//! Optical flow: Middlebury `.flo` I/O, conversion between per-pixel flow
//! and grid velocity fields, and noise injection.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{stencil_for, GridSpec, VectorField, MASS_EPSILON};
use crate::linalg::V2;

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";

/// Flow components above this magnitude mark missing data.
pub const UNKNOWN_FLOW: f32 = 1e9;
const UNKNOWN_FLOW_WRITE: f32 = 1e10;

/// One frame of per-pixel flow, in pixels/frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowFrame {
    pub width: usize,
    pub height: usize,
    pub t: f64,
    /// Row-major `(u, v)` per pixel.
    pub uv: Vec<[f32; 2]>,
    /// `false` where the pixel carries no observation.
    pub mask: Vec<bool>,
}

impl FlowFrame {
    pub fn new(width: usize, height: usize, t: f64, uv: Vec<[f32; 2]>) -> Self {
        assert_eq!(uv.len(), width * height);
        FlowFrame { width, height, t, mask: vec![true; uv.len()], uv }
    }

    pub fn from_fn(width: usize, height: usize, t: f64, f: impl Fn(usize, usize) -> [f32; 2]) -> Self {
        let mut uv = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                uv.push(f(x, y));
            }
        }
        FlowFrame::new(width, height, t, uv)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f32; 2] {
        self.uv[y * self.width + x]
    }

    pub fn max_magnitude(&self) -> f64 {
        self.uv
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .fold(0.0f64, |acc, (uv, _)| acc.max(((uv[0] as f64).powi(2) + (uv[1] as f64).powi(2)).sqrt()))
    }
}

pub fn encode_flo(frame: &FlowFrame) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + frame.uv.len() * 8);
    buf.extend_from_slice(FLO_MAGIC);
    buf.extend_from_slice(&(frame.width as i32).to_le_bytes());
    buf.extend_from_slice(&(frame.height as i32).to_le_bytes());
    for (uv, &ok) in frame.uv.iter().zip(&frame.mask) {
        let [u, v] = if ok { *uv } else { [UNKNOWN_FLOW_WRITE; 2] };
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decodes a `.flo` buffer. Components above [`UNKNOWN_FLOW`] or
/// non-finite are zeroed and masked out.
pub fn decode_flo(bytes: &[u8], path: &Path, t: f64) -> Result<FlowFrame> {
    if bytes.len() < 4 || &bytes[..4] != FLO_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: "PIEH" });
    }
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile { path: path.to_path_buf() });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::Invalid(format!("{}: bad flow dimensions {w}x{h}", path.display())));
    }
    let (w, h) = (w as usize, h as usize);
    let n = w * h;
    if bytes.len() < 12 + n * 8 {
        return Err(Error::TruncatedFile { path: path.to_path_buf() });
    }
    let mut uv = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut missing = 0usize;
    for px in bytes[12..12 + n * 8].chunks_exact(8) {
        let u = f32::from_le_bytes(px[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(px[4..8].try_into().unwrap());
        let ok = u.is_finite() && v.is_finite() && u.abs() <= UNKNOWN_FLOW && v.abs() <= UNKNOWN_FLOW;
        if ok {
            uv.push([u, v]);
        } else {
            missing += 1;
            uv.push([0.0, 0.0]);
        }
        mask.push(ok);
    }
    if missing > 0 {
        log::debug!("{}: {missing} missing flow value(s) masked", path.display());
    }
    Ok(FlowFrame { width: w, height: h, t, uv, mask })
}

pub fn read_flo(path: &Path) -> Result<FlowFrame> {
    decode_flo(&std::fs::read(path)?, path, 0.0)
}

pub fn write_flo(frame: &FlowFrame, path: &Path) -> Result<()> {
    std::fs::write(path, encode_flo(frame))?;
    Ok(())
}

/// Grid covering a `width × height` image with ghost padding.
pub fn grid_for_image(width: usize, height: usize, dx: f64) -> Result<GridSpec> {
    GridSpec::covering(width as f64, height as f64, dx)
}

/// Treats every observed pixel center as a unit-mass particle moving with
/// its flow and transfers it to the grid (P2G with zero affine term).
/// Returns the node velocity field and the node mass.
pub fn flow_to_field_with_mass(frame: &FlowFrame, spec: &GridSpec) -> Result<(VectorField<f64>, Vec<f64>)> {
    let n = spec.len();
    let mut mass = vec![0.0; n];
    let mut mom = vec![V2::new(0.0, 0.0); n];
    for y in 0..frame.height {
        for x in 0..frame.width {
            let k = y * frame.width + x;
            if !frame.mask[k] {
                continue;
            }
            let uv = frame.uv[k];
            let u = V2::new(uv[0] as f64, uv[1] as f64);
            let st = stencil_for(V2::new(x as f64 + 0.5, y as f64 + 0.5), spec)?;
            for (node, w, _) in st.iter(spec) {
                mass[node] += w;
                mom[node] += u.scale(w);
            }
        }
    }
    let values = mom
        .iter()
        .zip(&mass)
        .map(|(p, &m)| if m > MASS_EPSILON { p.scale(1.0 / m) } else { V2::new(0.0, 0.0) })
        .collect();
    Ok((VectorField { spec: *spec, values }, mass))
}

pub fn flow_to_field(frame: &FlowFrame, spec: &GridSpec) -> Result<VectorField<f64>> {
    Ok(flow_to_field_with_mass(frame, spec)?.0)
}

/// Samples a node field at every pixel center (G2P).
pub fn field_to_flow(field: &VectorField<f64>, width: usize, height: usize, t: f64) -> Result<FlowFrame> {
    let mut uv = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let st = stencil_for(V2::new(x as f64 + 0.5, y as f64 + 0.5), &field.spec)?;
            let v = field.sample(&st);
            uv.push([v.x as f32, v.y as f32]);
        }
    }
    Ok(FlowFrame::new(width, height, t, uv))
}

/// Default support of uniform noise: `[-0.7, 0.7] × [-0.8, 0.8]`.
pub const DEFAULT_NOISE_BOX: [[f64; 2]; 2] = [[-0.7, 0.7], [-0.8, 0.8]];

fn default_box() -> [[f64; 2]; 2] {
    DEFAULT_NOISE_BOX
}

/// Corruption model for robustness experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    /// Additive `N(0, std²)` per component.
    Gaussian { std: f64 },
    /// With probability `prob` per pixel, adds a sample uniform over
    /// `box` (`[[u_min, u_max], [v_min, v_max]]`).
    Uniform {
        prob: f64,
        #[serde(default = "default_box", rename = "box")]
        bounds: [[f64; 2]; 2],
    },
    /// `w_g·gaussian + w_u·uniform`.
    Mixture {
        std: f64,
        prob: f64,
        w_g: f64,
        w_u: f64,
        #[serde(default = "default_box", rename = "box")]
        bounds: [[f64; 2]; 2],
    },
}

fn uniform_draw(rng: &mut ChaCha8Rng, prob: f64, b: &[[f64; 2]; 2]) -> V2<f64> {
    if prob > 0.0 && rng.random::<f64>() < prob {
        V2::new(rng.random_range(b[0][0]..=b[0][1]), rng.random_range(b[1][0]..=b[1][1]))
    } else {
        V2::new(0.0, 0.0)
    }
}

/// Returns a corrupted copy of `frame`. Masked pixels stay untouched.
pub fn inject_noise(frame: &FlowFrame, spec: &NoiseSpec, seed: u64) -> Result<FlowFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |std: f64| Normal::new(0.0, std).map_err(|e| Error::Invalid(format!("noise std: {e}")));
    let mut out = frame.clone();
    let check_prob = |p: f64| {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("noise probability {p} outside [0, 1]")))
        }
    };
    match *spec {
        NoiseSpec::Gaussian { std } => {
            if std == 0.0 {
                return Ok(out);
            }
            let n = normal(std)?;
            for (uv, _) in out.uv.iter_mut().zip(&frame.mask).filter(|(_, &m)| m) {
                uv[0] += n.sample(&mut rng) as f32;
                uv[1] += n.sample(&mut rng) as f32;
            }
        }
        NoiseSpec::Uniform { prob, bounds } => {
            check_prob(prob)?;
            for (uv, _) in out.uv.iter_mut().zip(&frame.mask).filter(|(_, &m)| m) {
                let d = uniform_draw(&mut rng, prob, &bounds);
                uv[0] += d.x as f32;
                uv[1] += d.y as f32;
            }
        }
        NoiseSpec::Mixture { std, prob, w_g, w_u, bounds } => {
            check_prob(prob)?;
            let n = normal(std)?;
            for (uv, _) in out.uv.iter_mut().zip(&frame.mask).filter(|(_, &m)| m) {
                let g = V2::new(n.sample(&mut rng), n.sample(&mut rng));
                let u = uniform_draw(&mut rng, prob, &bounds);
                let d = g.scale(w_g) + u.scale(w_u);
                uv[0] += d.x as f32;
                uv[1] += d.y as f32;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowManifestEntry {
    pub file: String,
    pub t: f64,
}

/// On-disk description of a flow sequence directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowManifest {
    pub frames: Vec<FlowManifestEntry>,
    pub dx: f64,
    pub width: usize,
    pub height: usize,
}

/// Time-ordered flow frames of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSequence {
    pub frames: Vec<FlowFrame>,
    pub dx: f64,
    pub width: usize,
    pub height: usize,
}

impl FlowSequence {
    pub fn new(frames: Vec<FlowFrame>, dx: f64) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Invalid("flow sequence needs at least one frame".into()))?;
        let (width, height) = (first.width, first.height);
        for w in frames.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Invalid(format!("timestamps must increase strictly ({} then {})", w[0].t, w[1].t)));
            }
        }
        if let Some(f) = frames.iter().find(|f| f.width != width || f.height != height) {
            return Err(Error::DimMismatch(format!(
                "frame at t={} is {}x{}, sequence is {width}x{height}",
                f.t, f.width, f.height
            )));
        }
        if !(dx > 0.0) {
            return Err(Error::Invalid(format!("dx must be > 0, got {dx}")));
        }
        Ok(FlowSequence { frames, dx, width, height })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        grid_for_image(self.width, self.height, self.dx)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let m: FlowManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let mut frames = Vec::with_capacity(m.frames.len());
        for e in &m.frames {
            let p = dir.join(&e.file);
            let mut f = decode_flo(&std::fs::read(&p)?, &p, e.t)?;
            f.t = e.t;
            if f.width != m.width || f.height != m.height {
                return Err(Error::DimMismatch(format!(
                    "{} is {}x{}, manifest says {}x{}",
                    p.display(),
                    f.width,
                    f.height,
                    m.width,
                    m.height
                )));
            }
            frames.push(f);
        }
        FlowSequence::new(frames, m.dx)
    }

    /// Writes `frame_NNNNN.flo` files and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.frames.len());
        for (i, f) in self.frames.iter().enumerate() {
            let file = format!("frame_{i:05}.flo");
            write_flo(f, &dir.join(&file))?;
            entries.push(FlowManifestEntry { file, t: f.t });
        }
        let m = FlowManifest { frames: entries, dx: self.dx, width: self.width, height: self.height };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&m)?)?;
        Ok(path)
    }
}
