//! Field serialization.
//!
//! CSV layout: a header row `nx,ny,dx,origin_x,origin_y`, one row with
//! those values, then `ny` rows (j = 0 first) each holding the `nx` node
//! values of that row. Vector fields interleave components as
//! `vx,vy,vx,vy,...`.
//!
//! Binary layout (little endian): magic `CMF1`, `u32` component count
//! (1 or 2), `u32 nx`, `u32 ny`, `f64 dx`, `f64 origin_x`, `f64 origin_y`,
//! then the row-major node values as `f64`.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::linalg::V2;

pub const FIELD_MAGIC: &[u8; 4] = b"CMF1";
const CSV_HEADER: &str = "nx,ny,dx,origin_x,origin_y";

/// Either kind of field, as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyField {
    Scalar(ScalarField<f64>),
    Vector(VectorField<f64>),
}

fn header_csv(s: &GridSpec) -> String {
    format!("{CSV_HEADER}\n{},{},{},{},{}\n", s.nx, s.ny, s.dx, s.origin.x, s.origin.y)
}

pub fn scalar_to_csv(f: &ScalarField<f64>) -> String {
    let s = f.spec;
    let mut out = header_csv(&s);
    for j in 0..s.ny {
        let row = &f.values[s.index(0, j)..s.index(0, j) + s.nx];
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_to_csv(f: &VectorField<f64>) -> String {
    let s = f.spec;
    let mut out = header_csv(&s);
    for j in 0..s.ny {
        for i in 0..s.nx {
            let v = f.at(i, j);
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{},{}", v.x, v.y);
        }
        out.push('\n');
    }
    out
}

pub fn field_from_csv(text: &str) -> Result<AnyField> {
    let bad = |m: &str| Error::Invalid(format!("field csv: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(bad("missing header"));
    }
    let meta: Vec<&str> = lines.next().ok_or_else(|| bad("missing metadata"))?.split(',').collect();
    if meta.len() != 5 {
        return Err(bad("metadata needs 5 columns"));
    }
    let nx: usize = meta[0].trim().parse().map_err(|_| bad("nx"))?;
    let ny: usize = meta[1].trim().parse().map_err(|_| bad("ny"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("not a number: {s:?}")));
    let spec = GridSpec { nx, ny, dx: num(meta[2])?, origin: V2::new(num(meta[3])?, num(meta[4])?) };
    let mut flat = Vec::with_capacity(2 * nx * ny);
    let mut width = None;
    for (row, line) in lines.enumerate().take(ny) {
        let vals: Vec<f64> = line.split(',').map(num).collect::<Result<_>>()?;
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => return Err(bad(&format!("row {row} has {} values", vals.len()))),
            _ => {}
        }
        flat.extend(vals);
    }
    match width {
        Some(w) if w == nx && flat.len() == nx * ny => Ok(AnyField::Scalar(ScalarField { spec, values: flat })),
        Some(w) if w == 2 * nx && flat.len() == 2 * nx * ny => Ok(AnyField::Vector(VectorField {
            spec,
            values: flat.chunks_exact(2).map(|c| V2::new(c[0], c[1])).collect(),
        })),
        _ => Err(bad("row count or width does not match nx, ny")),
    }
}

fn encode(spec: &GridSpec, comps: u32, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(40 + spec.len() * comps as usize * 8);
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&comps.to_le_bytes());
    buf.extend_from_slice(&(spec.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.ny as u32).to_le_bytes());
    for v in [spec.dx, spec.origin.x, spec.origin.y] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn scalar_to_bytes(f: &ScalarField<f64>) -> Vec<u8> {
    encode(&f.spec, 1, f.values.iter().copied())
}

pub fn vector_to_bytes(f: &VectorField<f64>) -> Vec<u8> {
    encode(&f.spec, 2, f.values.iter().flat_map(|v| [v.x, v.y]))
}

pub fn field_from_bytes(bytes: &[u8], path: &Path) -> Result<AnyField> {
    let truncated = || Error::TruncatedFile { path: path.to_path_buf() };
    if bytes.len() < 4 || &bytes[..4] != FIELD_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: "CMF1" });
    }
    if bytes.len() < 40 {
        return Err(truncated());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let comps = u32_at(4) as usize;
    let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
    let spec = GridSpec { nx, ny, dx: f64_at(16), origin: V2::new(f64_at(24), f64_at(32)) };
    let n = nx * ny * comps;
    if bytes.len() < 40 + n * 8 {
        return Err(truncated());
    }
    let vals: Vec<f64> = (0..n).map(|k| f64_at(40 + 8 * k)).collect();
    match comps {
        1 => Ok(AnyField::Scalar(ScalarField { spec, values: vals })),
        2 => Ok(AnyField::Vector(VectorField {
            spec,
            values: vals.chunks_exact(2).map(|c| V2::new(c[0], c[1])).collect(),
        })),
        c => Err(Error::Invalid(format!("{path:?}: unsupported component count {c}"))),
    }
}

pub fn write_vector(path: &Path, f: &VectorField<f64>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&vector_to_bytes(f))?;
    Ok(())
}

pub fn write_scalar(path: &Path, f: &ScalarField<f64>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&scalar_to_bytes(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<AnyField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    field_from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(5, 4, 2.5, V2::new(-5.0, -5.0)).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let s = spec();
        let v = VectorField::from_fn(s, |p| V2::new(p.x * 0.1, -p.y / 3.0));
        assert_eq!(field_from_csv(&vector_to_csv(&v)).unwrap(), AnyField::Vector(v));
        let sc = ScalarField { spec: s, values: (0..s.len()).map(|k| k as f64 * 1.25e-3).collect() };
        let text = scalar_to_csv(&sc);
        assert!(text.starts_with("nx,ny,dx,origin_x,origin_y\n5,4,2.5,-5,-5\n"));
        assert_eq!(field_from_csv(&text).unwrap(), AnyField::Scalar(sc));
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let s = spec();
        let v = VectorField::from_fn(s, |p| V2::new(p.x.sin(), p.y.cos()));
        let bytes = vector_to_bytes(&v);
        assert_eq!(bytes.len(), 40 + s.len() * 16);
        let p = Path::new("x.cmf");
        assert_eq!(field_from_bytes(&bytes, p).unwrap(), AnyField::Vector(v));
        assert!(matches!(field_from_bytes(&bytes[..40], p), Err(Error::TruncatedFile { .. })));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(field_from_bytes(&wrong, p), Err(Error::BadMagic { .. })));
    }
}
