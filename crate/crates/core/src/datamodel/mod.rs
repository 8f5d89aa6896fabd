//! Core data types: fields, particle sets, codec configuration, and the
//! compressed stream container.

mod io;
mod stream;

pub use io::{read_field, read_particles, write_field, write_particles, FieldHeader, ParticleManifest};
pub use stream::{ByteReader, CompressedStream, HEADER_BYTES, MAGIC, OVERHEAD_BYTES, VERSION};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A scalar field sampled on a regular grid, row-major (C order), up to 3-D.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    /// 1 to 3 extents, slowest-varying first. Product equals `values.len()`.
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
    /// Optional (lo, hi) range the producer declares for the data.
    pub declared_range: Option<(f32, f32)>,
}

impl Field {
    pub fn new(
        name: impl Into<String>,
        dims: Vec<usize>,
        values: Vec<f32>,
        declared_range: Option<(f32, f32)>,
    ) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Domain(format!("field rank must be 1..=3, got {}", dims.len())));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Domain(format!("field dims must be positive, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::Domain(format!(
                "dims {dims:?} imply {n} values, got {}",
                values.len()
            )));
        }
        if let Some((lo, hi)) = declared_range {
            if !(lo <= hi) {
                return Err(Error::Domain(format!("declared range ({lo}, {hi}) has lo > hi")));
            }
        }
        Ok(Field { name: name.into(), dims, values, declared_range })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Extents padded with trailing 1s to rank 3.
    pub fn dims3(&self) -> [usize; 3] {
        let mut d = [1usize; 3];
        for (i, &x) in self.dims.iter().enumerate() {
            d[i] = x;
        }
        d
    }

    /// Size of the raw payload in bytes (4 per value).
    pub fn byte_len(&self) -> u64 {
        self.values.len() as u64 * 4
    }

    /// (min, max) over the values; `None` when any value is not finite.
    pub fn value_range(&self) -> Option<(f32, f32)> {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.values {
            if !v.is_finite() {
                return None;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// Particles in a periodic cubic box; positions wrapped to `[0, box_length)`.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub pos: [Vec<f32>; 3],
    pub vel: [Vec<f32>; 3],
    pub box_length: f64,
    pub particle_mass: f64,
}

/// Wrap a coordinate into `[0, box_length)`, robust to rounding at the seam.
pub fn wrap_coord(x: f32, box_length: f64) -> f32 {
    let p = (x as f64).rem_euclid(box_length);
    let q = p as f32;
    // The f64 remainder is < box_length, but either step can round up to it.
    if q >= box_length as f32 || q < 0.0 {
        0.0
    } else {
        q
    }
}

impl ParticleSet {
    pub fn new(
        pos: [Vec<f32>; 3],
        vel: [Vec<f32>; 3],
        box_length: f64,
        particle_mass: f64,
    ) -> Result<Self> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Domain(format!("box_length must be positive, got {box_length}")));
        }
        if !(particle_mass.is_finite() && particle_mass > 0.0) {
            return Err(Error::Domain(format!(
                "particle_mass must be positive, got {particle_mass}"
            )));
        }
        let n = pos[0].len();
        if n == 0 {
            return Err(Error::Domain("particle set is empty".into()));
        }
        for (label, comp) in
            [("y", &pos[1]), ("z", &pos[2]), ("vx", &vel[0]), ("vy", &vel[1]), ("vz", &vel[2])]
        {
            if comp.len() != n {
                return Err(Error::Domain(format!(
                    "component {label} has {} entries, expected {n}",
                    comp.len()
                )));
            }
        }
        for axis in &pos {
            if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite position at index {i}")));
            }
        }
        for axis in &vel {
            if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite velocity at index {i}")));
            }
        }
        let mut pos = pos;
        for axis in &mut pos {
            for v in axis.iter_mut() {
                *v = wrap_coord(*v, box_length);
            }
        }
        Ok(ParticleSet { pos, vel, box_length, particle_mass })
    }

    pub fn len(&self) -> usize {
        self.pos[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which compression algorithm a stream uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codec {
    /// Error-bounded predictive coder (prediction + quantization + Huffman).
    Pred,
    /// Fixed-rate block-transform coder.
    Block,
}

impl Codec {
    pub fn tag(self) -> u8 {
        match self {
            Codec::Pred => 1,
            Codec::Block => 2,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            1 => Some(Codec::Pred),
            2 => Some(Codec::Block),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Codec::Pred => "pred",
            Codec::Block => "block",
        }
    }
}

/// How the single codec parameter is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Absolute error bound.
    Abs,
    /// Pointwise relative error bound (log-domain transform).
    PwRel,
    /// Fixed bits per value.
    FixedRate,
}

impl Mode {
    pub fn tag(self) -> u8 {
        match self {
            Mode::Abs => 1,
            Mode::PwRel => 2,
            Mode::FixedRate => 3,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            1 => Some(Mode::Abs),
            2 => Some(Mode::PwRel),
            3 => Some(Mode::FixedRate),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Abs => "abs",
            Mode::PwRel => "pw_rel",
            Mode::FixedRate => "fixed_rate",
        }
    }
}

/// Smallest accepted pointwise-relative bound. Below this the bound competes
/// with f32 log/exp round-off and the guarantee cannot be kept.
pub const MIN_PW_REL: f64 = 1e-4;

/// One codec configuration: algorithm, parameter interpretation, parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub codec: Codec,
    pub mode: Mode,
    pub param: f64,
}

impl CompressionConfig {
    pub fn new(codec: Codec, mode: Mode, param: f64) -> Result<Self> {
        let cfg = CompressionConfig { codec, mode, param };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.param.is_finite() {
            return Err(Error::Config(format!("param must be finite, got {}", self.param)));
        }
        match (self.codec, self.mode) {
            (Codec::Pred, Mode::Abs) => {
                if self.param <= 0.0 {
                    return Err(Error::Config(format!(
                        "abs error bound must be > 0, got {}",
                        self.param
                    )));
                }
            }
            (Codec::Pred, Mode::PwRel) => {
                if !(self.param >= MIN_PW_REL && self.param < 1.0) {
                    return Err(Error::Config(format!(
                        "pw_rel bound must lie in [{MIN_PW_REL}, 1), got {}",
                        self.param
                    )));
                }
            }
            (Codec::Block, Mode::FixedRate) => {
                if !(self.param > 0.0 && self.param <= 32.0) {
                    return Err(Error::Config(format!(
                        "fixed_rate bitrate must lie in (0, 32], got {}",
                        self.param
                    )));
                }
                let bits_per_block = (self.param * 64.0).round() as i64;
                if bits_per_block < 8 {
                    return Err(Error::Config(format!(
                        "bitrate {} leaves no room for the block exponent byte",
                        self.param
                    )));
                }
            }
            (codec, mode) => {
                return Err(Error::Config(format!(
                    "codec {} does not support mode {}",
                    codec.name(),
                    mode.name()
                )));
            }
        }
        Ok(())
    }

    /// Canonical display form, also the lexicographic tie-break key.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.codec.name(), self.mode.name(), self.param)
    }

    /// Filesystem-safe form of `label()`.
    pub fn slug(&self) -> String {
        self.label().replace('/', "_").replace('.', "p").replace('-', "m")
    }
}

impl std::fmt::Display for CompressionConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Original size over stored size. Ratios below 1 are returned as-is.
pub fn compression_ratio(original_bytes: u64, stream: &CompressedStream) -> Result<f64> {
    if original_bytes == 0 {
        return Err(Error::Domain("original_bytes must be > 0".into()));
    }
    Ok(original_bytes as f64 / stream.total_bytes() as f64)
}

/// Stored bits per original value, headers included.
pub fn bitrate(n_values: u64, stream: &CompressedStream) -> Result<f64> {
    if n_values == 0 {
        return Err(Error::Domain("n_values must be > 0".into()));
    }
    Ok(stream.total_bytes() as f64 * 8.0 / n_values as f64)
}
