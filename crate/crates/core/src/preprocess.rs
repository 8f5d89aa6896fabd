//! Preprocessing: reshaping 1-D streams into 3-D partitions and the
//! log-domain transform that turns a pointwise-relative bound into an
//! absolute one.

use crate::datamodel::{Field, MIN_PW_REL};
use crate::error::{Error, Result};

/// How a 1-D field was split into equal 3-D partitions.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PadSpec {
    pub name: String,
    pub original_len: usize,
    pub target_dims: [usize; 3],
    pub partitions: usize,
}

impl PadSpec {
    pub fn chunk_len(&self) -> usize {
        self.target_dims.iter().product()
    }

    /// Zeros appended to fill the final partition.
    pub fn pad(&self) -> usize {
        self.partitions * self.chunk_len() - self.original_len
    }
}

/// Partition count and zero-pad length for splitting `len` values into
/// chunks of `target_dims` volume. Pure arithmetic, usable before any
/// allocation.
pub fn partition_plan(len: usize, target_dims: [usize; 3]) -> Result<(usize, usize)> {
    if len == 0 {
        return Err(Error::Domain("cannot partition an empty field".into()));
    }
    if target_dims.iter().any(|&d| d == 0) {
        return Err(Error::Domain(format!("target dims must be positive, got {target_dims:?}")));
    }
    let chunk: usize = target_dims.iter().product();
    let partitions = len.div_ceil(chunk);
    Ok((partitions, partitions * chunk - len))
}

/// Split a 1-D field into equal 3-D partitions, zero-padding the last one.
pub fn partition_1d_to_3d(f: &Field, target_dims: [usize; 3]) -> Result<(Vec<Field>, PadSpec)> {
    if f.dims.len() != 1 {
        return Err(Error::Domain(format!("partitioning expects a 1-D field, got {:?}", f.dims)));
    }
    let (partitions, _pad) = partition_plan(f.len(), target_dims)?;
    let chunk: usize = target_dims.iter().product();
    let mut parts = Vec::with_capacity(partitions);
    for p in 0..partitions {
        let start = p * chunk;
        let end = (start + chunk).min(f.len());
        let mut values = f.values[start..end].to_vec();
        values.resize(chunk, 0.0);
        parts.push(Field::new(
            format!("{}.part{p:03}", f.name),
            target_dims.to_vec(),
            values,
            f.declared_range,
        )?);
    }
    let spec = PadSpec {
        name: f.name.clone(),
        original_len: f.len(),
        target_dims,
        partitions,
    };
    Ok((parts, spec))
}

/// Reassemble partitions produced by [`partition_1d_to_3d`], dropping the pad.
pub fn merge_3d_to_1d(parts: &[Field], spec: &PadSpec) -> Result<Field> {
    if parts.len() != spec.partitions {
        return Err(Error::Domain(format!(
            "expected {} partitions, got {}",
            spec.partitions,
            parts.len()
        )));
    }
    let chunk = spec.chunk_len();
    let mut values = Vec::with_capacity(spec.partitions * chunk);
    for (i, p) in parts.iter().enumerate() {
        if p.dims3() != spec.target_dims {
            return Err(Error::DimsMismatch {
                left: p.dims.clone(),
                right: spec.target_dims.to_vec(),
            });
        }
        if p.len() != chunk {
            return Err(Error::Domain(format!(
                "partition {i} has {} values, expected {chunk}",
                p.len()
            )));
        }
        values.extend_from_slice(&p.values);
    }
    values.truncate(spec.original_len);
    Field::new(spec.name.clone(), vec![spec.original_len], values, None)
}

/// Fixed-size bit set, one bit per value, MSB-first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    len: usize,
    bytes: Vec<u8>,
}

impl BitMask {
    pub fn new(len: usize) -> Self {
        BitMask { len, bytes: vec![0; len.div_ceil(8)] }
    }

    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Format(format!(
                "bit mask of {len} values needs {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        Ok(BitMask { len, bytes })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 0x80u8 >> (i % 8);
        if v {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }
}

/// Safety margin subtracted from `ln(1 + rel_bound)` so that f32 rounding in
/// the log/exp round trip cannot push a reconstruction past the relative
/// bound. The worst-case rounding slack is under 4e-6 in the log domain
/// (half an ulp of |ln x| <= 89 plus the final f32 cast); 1e-5 leaves 2.5x
/// headroom.
pub const PW_REL_GUARD: f64 = 1e-5;

/// Absolute log-domain bound that enforces a pointwise-relative bound.
pub fn pw_rel_abs_bound(rel_bound: f64) -> f64 {
    (1.0 + rel_bound).ln() - PW_REL_GUARD
}

/// Zero threshold for a relative bound: values with |x| below it are recorded
/// in the zero mask and reconstruct to exactly 0.
pub fn pw_rel_theta(rel_bound: f64) -> f64 {
    rel_bound * 1e-30
}

/// A field moved to the log domain, plus the masks needed to invert it.
#[derive(Debug, Clone)]
pub struct LogTransformed {
    /// y = ln|x| (or ln(theta) for masked zeros).
    pub field: Field,
    /// Bit per value: input was negative.
    pub signs: BitMask,
    /// Bit per value: |input| < theta, reconstructs to exactly 0.
    pub zeros: BitMask,
    /// Absolute bound to compress `field` with.
    pub abs_bound: f64,
    pub rel_bound: f64,
    pub theta: f64,
}

fn check_rel_bound(rel_bound: f64) -> Result<()> {
    if !(rel_bound.is_finite() && (MIN_PW_REL..1.0).contains(&rel_bound)) {
        return Err(Error::Config(format!(
            "pw_rel bound must lie in [{MIN_PW_REL}, 1), got {rel_bound}"
        )));
    }
    Ok(())
}

/// Forward log transform: y = ln|x|, with sign and sub-threshold zero masks.
pub fn log_forward(f: &Field, rel_bound: f64) -> Result<LogTransformed> {
    check_rel_bound(rel_bound)?;
    if let Some(i) = f.first_non_finite() {
        return Err(Error::Domain(format!(
            "log transform requires finite values; first offender at index {i}: {}",
            f.values[i]
        )));
    }
    let theta = pw_rel_theta(rel_bound);
    let log_theta = theta.ln() as f32;
    let mut signs = BitMask::new(f.len());
    let mut zeros = BitMask::new(f.len());
    let mut y = Vec::with_capacity(f.len());
    for (i, &x) in f.values.iter().enumerate() {
        if x < 0.0 {
            signs.set(i, true);
        }
        let ax = (x as f64).abs();
        if ax < theta {
            zeros.set(i, true);
            y.push(log_theta);
        } else {
            y.push(ax.ln() as f32);
        }
    }
    let field = Field::new(format!("{}.log", f.name), f.dims.clone(), y, None)?;
    Ok(LogTransformed {
        field,
        signs,
        zeros,
        abs_bound: pw_rel_abs_bound(rel_bound),
        rel_bound,
        theta,
    })
}

/// Invert [`log_forward`]: x = sign * exp(y), masked zeros become exactly 0.
pub fn log_inverse(y: &Field, signs: &BitMask, zeros: &BitMask) -> Result<Field> {
    if signs.len() != y.len() || zeros.len() != y.len() {
        return Err(Error::Domain(format!(
            "mask lengths ({}, {}) do not match field length {}",
            signs.len(),
            zeros.len(),
            y.len()
        )));
    }
    let mut values = Vec::with_capacity(y.len());
    for (i, &yi) in y.values.iter().enumerate() {
        if zeros.get(i) {
            values.push(0.0);
            continue;
        }
        // exp in f64, clamped so near-max magnitudes cannot round to inf.
        let mag = (yi as f64).exp().min(f32::MAX as f64);
        values.push(if signs.get(i) { -(mag as f32) } else { mag as f32 });
    }
    let name = y.name.strip_suffix(".log").unwrap_or(&y.name).to_string();
    Field::new(name, y.dims.clone(), values, None)
}
