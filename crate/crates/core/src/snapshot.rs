//! Particle-state snapshots: a JSON manifest next to a binary particle
//! array.
//!
//! Binary layout (little endian): magic `CMP1`, `u64` particle count, then
//! 16 `f64` per particle: `m, x, y, vx, vy, C00, C01, C10, C11, F00, F01,
//! F10, F11, r_a, r_b, V0`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{M2, V2};
use crate::mpm::{Particle, State};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CMP1";
const FIELDS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub schema_version: u32,
    pub step: u64,
    pub time: f64,
    pub count: usize,
    pub exited: usize,
    pub exited_mass: f64,
    /// Binary file name, relative to the manifest.
    pub particles: String,
}

pub fn encode_particles(particles: &[Particle<f64>]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + particles.len() * FIELDS * 8);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(particles.len() as u64).to_le_bytes());
    for p in particles {
        let c = p.c.m;
        let f = p.f.m;
        let row = [
            p.mass, p.x.x, p.x.y, p.v.x, p.v.y, c[0][0], c[0][1], c[1][0], c[1][1], f[0][0], f[0][1], f[1][0], f[1][1],
            p.r_a, p.r_b, p.v0,
        ];
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_particles(bytes: &[u8], path: &Path) -> Result<Vec<Particle<f64>>> {
    if bytes.len() < 4 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: "CMP1" });
    }
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile { path: path.to_path_buf() });
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < n * FIELDS * 8 {
        return Err(Error::TruncatedFile { path: path.to_path_buf() });
    }
    Ok(body
        .chunks_exact(FIELDS * 8)
        .take(n)
        .map(|chunk| {
            let v: Vec<f64> = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            Particle {
                mass: v[0],
                x: V2::new(v[1], v[2]),
                v: V2::new(v[3], v[4]),
                c: M2 { m: [[v[5], v[6]], [v[7], v[8]]] },
                f: M2 { m: [[v[9], v[10]], [v[11], v[12]]] },
                r_a: v[13],
                r_b: v[14],
                v0: v[15],
            }
        })
        .collect())
}

/// Base name of frame `n` inside a run directory.
pub fn frame_stem(n: usize) -> String {
    format!("frame_{n:05}")
}

/// Writes `frame_NNNNN.json` and `frame_NNNNN.cmp` into `dir`.
pub fn write_snapshot(dir: &Path, frame: usize, state: &State<f64>) -> Result<PathBuf> {
    let stem = frame_stem(frame);
    let bin = format!("{stem}.cmp");
    std::fs::write(dir.join(&bin), encode_particles(&state.particles))?;
    let manifest = SnapshotManifest {
        schema_version: 1,
        step: state.step,
        time: state.time,
        count: state.particles.len(),
        exited: state.exited,
        exited_mass: state.exited_mass,
        particles: bin,
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

/// Reads a snapshot from its manifest path.
pub fn read_snapshot(manifest_path: &Path) -> Result<(SnapshotManifest, State<f64>)> {
    let manifest: SnapshotManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
    let bin = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.particles);
    let particles = decode_particles(&std::fs::read(&bin)?, &bin)?;
    if particles.len() != manifest.count {
        return Err(Error::DimMismatch(format!(
            "{}: manifest lists {} particles, binary holds {}",
            manifest_path.display(),
            manifest.count,
            particles.len()
        )));
    }
    let state = State {
        particles,
        step: manifest.step,
        time: manifest.time,
        exited: manifest.exited,
        exited_mass: manifest.exited_mass,
    };
    Ok((manifest, state))
}

/// Snapshot manifests in `dir`, ordered by frame number.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    out.sort();
    Ok(out)
}
