//! File formats for fields and particle sets.
//!
//! A field is stored as a raw little-endian f32 payload at `<path>` plus a
//! JSON sidecar at `<path>.json` describing name, dims, dtype, and layout
//! order. A particle set is a JSON manifest pointing at six component field
//! files (positions x/y/z, velocities vx/vy/vz).

use crate::datamodel::{Field, ParticleSet};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub name: String,
    pub dims: Vec<usize>,
    pub dtype: String,
    pub order: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write `field` as raw LE f32 plus a `<path>.json` sidecar.
pub fn write_field(field: &Field, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(field.values.len() * 4);
    for v in &field.values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    let header = FieldHeader {
        name: field.name.clone(),
        dims: field.dims.clone(),
        dtype: "f32".into(),
        order: "C".into(),
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    let sp = sidecar_path(path);
    fs::write(&sp, text).map_err(|e| Error::io(sp, e))?;
    Ok(())
}

/// Read a field written by [`write_field`]. Bit patterns round-trip exactly.
pub fn read_field(path: &Path) -> Result<Field> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let header: FieldHeader = serde_json::from_str(&text).map_err(|e| Error::json(&sp, e))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("{}: unsupported dtype {:?}", sp.display(), header.dtype)));
    }
    if header.order != "C" {
        return Err(Error::Format(format!("{}: unsupported order {:?}", sp.display(), header.order)));
    }
    if header.dims.is_empty() || header.dims.len() > 3 || header.dims.iter().any(|&d| d == 0) {
        return Err(Error::Format(format!("{}: bad dims {:?}", sp.display(), header.dims)));
    }
    let n: usize = header.dims.iter().product();
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    if payload.len() < n * 4 {
        return Err(Error::Truncated { needed: n * 4, available: payload.len() });
    }
    if payload.len() > n * 4 {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, dims {:?} expect {}",
            path.display(),
            payload.len(),
            header.dims,
            n * 4
        )));
    }
    let values: Vec<f32> =
        payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Field::new(header.name, header.dims, values, None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleManifest {
    pub box_length: f64,
    pub particle_mass: f64,
    /// Component file paths relative to the manifest's directory:
    /// x, y, z, vx, vy, vz.
    pub components: [String; 6],
}

/// Write a particle set as six component fields plus a manifest at
/// `<dir>/<stem>.particles.json`. Returns the manifest path.
pub fn write_particles(set: &ParticleSet, dir: &Path, stem: &str) -> Result<PathBuf> {
    let comp_names = ["x", "y", "z", "vx", "vy", "vz"];
    let mut rel = Vec::with_capacity(6);
    let n = set.len();
    for (i, comp) in comp_names.iter().enumerate() {
        let values = if i < 3 { set.pos[i].clone() } else { set.vel[i - 3].clone() };
        let field = Field::new(format!("{stem}.{comp}"), vec![n], values, None)?;
        let file = format!("{stem}.{comp}.f32");
        write_field(&field, &dir.join(&file))?;
        rel.push(file);
    }
    let manifest = ParticleManifest {
        box_length: set.box_length,
        particle_mass: set.particle_mass,
        components: rel.try_into().expect("six components"),
    };
    let path = dir.join(format!("{stem}.particles.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Read a particle set from a manifest written by [`write_particles`].
pub fn read_particles(manifest_path: &Path) -> Result<ParticleSet> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: ParticleManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut comps = Vec::with_capacity(6);
    for rel in &manifest.components {
        let f = read_field(&dir.join(rel))?;
        comps.push(f.values);
    }
    let vz = comps.pop().unwrap();
    let vy = comps.pop().unwrap();
    let vx = comps.pop().unwrap();
    let z = comps.pop().unwrap();
    let y = comps.pop().unwrap();
    let x = comps.pop().unwrap();
    ParticleSet::new([x, y, z], [vx, vy, vz], manifest.box_length, manifest.particle_mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("field.f32");
        // Include NaN payloads, negative zero, subnormals, infinities are
        // rejected by codecs but must survive storage untouched.
        let values = vec![
            0.0f32,
            -0.0,
            1.5,
            f32::from_bits(0x7fc0_1234), // quiet NaN with payload
            f32::from_bits(0xffc0_0001),
            f32::MIN_POSITIVE / 8.0, // subnormal
            -3.25e7,
        ];
        let f = Field::new("t", vec![7], values.clone(), None).unwrap();
        write_field(&f, &path).unwrap();
        let g = read_field(&path).unwrap();
        assert_eq!(g.name, "t");
        assert_eq!(g.dims, vec![7]);
        let a: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = g.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_sidecar_is_io_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("missing.f32");
        fs::write(&path, [0u8; 4]).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn garbled_sidecar_is_json_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.f32");
        fs::write(&path, [0u8; 4]).unwrap();
        fs::write(sidecar_path(&path), "{not json").unwrap();
        assert!(matches!(read_field(&path), Err(Error::Json { .. })));
    }

    #[test]
    fn short_payload_is_truncation_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.f32");
        let f = Field::new("t", vec![4], vec![1.0; 4], None).unwrap();
        write_field(&f, &path).unwrap();
        fs::write(&path, [0u8; 10]).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Truncated { needed: 16, available: 10 })));
    }

    #[test]
    fn oversized_payload_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("long.f32");
        let f = Field::new("t", vec![2], vec![1.0; 2], None).unwrap();
        write_field(&f, &path).unwrap();
        fs::write(&path, [0u8; 12]).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_dtype_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f64.f32");
        fs::write(&path, [0u8; 8]).unwrap();
        let header = FieldHeader {
            name: "x".into(),
            dims: vec![1],
            dtype: "f64".into(),
            order: "C".into(),
        };
        fs::write(sidecar_path(&path), serde_json::to_string(&header).unwrap()).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Format(_))));
    }

    #[test]
    fn particles_round_trip() {
        let dir = tempdir().unwrap();
        let pos = [vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let vel = [vec![-1.0, 0.0, 1.0], vec![0.5, 0.5, 0.5], vec![9.0, 8.0, 7.0]];
        let set = ParticleSet::new(pos, vel, 64.0, 2.5).unwrap();
        let manifest = write_particles(&set, dir.path(), "demo").unwrap();
        let back = read_particles(&manifest).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.box_length, 64.0);
        assert_eq!(back.particle_mass, 2.5);
        assert_eq!(back.pos[0], set.pos[0]);
        assert_eq!(back.vel[2], set.vel[2]);
    }
}
