//! Error-bounded predictive codec.
//!
//! The field is split into cubic blocks. Each block commits to one of two
//! predictors, chosen on the original values by total absolute residual
//! (ties favor the neighborhood predictor):
//!
//! * a 7-term third-order neighborhood predictor (out-of-field neighbors
//!   read as zero), evaluated on previously reconstructed values so the
//!   decoder can replay it, and
//! * a least-squares plane `a*i + b*j + c*k + d` over block-local
//!   coordinates, with coefficients stored as f32.
//!
//! Residuals are quantized with step `2 * abs_bound`, coded with a shared
//! canonical Huffman table, and every value is verified after the round
//! trip through f32: if the reconstruction misses the bound the value is
//! stored verbatim as an outlier (code 0). The decoder therefore never
//! sees an error above `abs_bound`.

use crate::codec::bits::{BitReader, BitWriter};
use crate::codec::huffman::HuffmanTable;
use crate::datamodel::ByteReader;
use crate::error::{Error, Result};
use crate::preprocess::BitMask;

pub const DEFAULT_BLOCK_EDGE: usize = 6;
pub const DEFAULT_QUANT_CAP: u32 = 65536;

/// Payload flag bit: a sign mask and a zero mask for the point-wise
/// relative mode trail the outlier section.
pub const FLAG_PW_REL_MASKS: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PredParams {
    pub abs_bound: f64,
    pub block_edge: usize,
    pub quant_cap: u32,
}

impl PredParams {
    pub fn new(abs_bound: f64) -> Self {
        PredParams { abs_bound, block_edge: DEFAULT_BLOCK_EDGE, quant_cap: DEFAULT_QUANT_CAP }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.abs_bound.is_finite() || self.abs_bound <= 0.0 {
            return Err(Error::Config(format!(
                "absolute error bound must be finite and positive, got {}",
                self.abs_bound
            )));
        }
        if self.block_edge == 0 || self.block_edge > 64 {
            return Err(Error::Config(format!(
                "block edge must be in 1..=64, got {}",
                self.block_edge
            )));
        }
        if self.quant_cap < 4 || self.quant_cap % 2 != 0 {
            return Err(Error::Config(format!(
                "quantizer capacity must be even and at least 4, got {}",
                self.quant_cap
            )));
        }
        Ok(())
    }
}

/// Block decomposition of a field: per-axis block index and local offset
/// for every coordinate, precomputed once.
struct Blocks {
    nb: [usize; 3],
    /// For each axis, (block coordinate, local offset) per grid coordinate.
    axis: [Vec<(usize, usize)>; 3],
    starts: Vec<[usize; 3]>,
    sizes: Vec<[usize; 3]>,
}

impl Blocks {
    fn new(dims: [usize; 3], edge: usize) -> Self {
        let nb = [
            dims[0].div_ceil(edge),
            dims[1].div_ceil(edge),
            dims[2].div_ceil(edge),
        ];
        let axis = std::array::from_fn(|a| {
            (0..dims[a]).map(|c| (c / edge, c % edge)).collect::<Vec<_>>()
        });
        let mut starts = Vec::with_capacity(nb[0] * nb[1] * nb[2]);
        let mut sizes = Vec::with_capacity(nb[0] * nb[1] * nb[2]);
        for b0 in 0..nb[0] {
            for b1 in 0..nb[1] {
                for b2 in 0..nb[2] {
                    let s = [b0 * edge, b1 * edge, b2 * edge];
                    starts.push(s);
                    sizes.push([
                        edge.min(dims[0] - s[0]),
                        edge.min(dims[1] - s[1]),
                        edge.min(dims[2] - s[2]),
                    ]);
                }
            }
        }
        Blocks { nb, axis, starts, sizes }
    }

    fn n_blocks(&self) -> usize {
        self.starts.len()
    }

    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> (usize, [f64; 3]) {
        let (bi, li) = self.axis[0][i];
        let (bj, lj) = self.axis[1][j];
        let (bk, lk) = self.axis[2][k];
        let block = (bi * self.nb[1] + bj) * self.nb[2] + bk;
        (block, [li as f64, lj as f64, lk as f64])
    }
}

/// 7-term neighborhood prediction at (i, j, k); neighbors outside the
/// field contribute zero.
#[inline]
pub(crate) fn lorenzo_at(values: &[f32], dims: [usize; 3], i: usize, j: usize, k: usize) -> f64 {
    let s1 = dims[1] * dims[2];
    let s2 = dims[2];
    let base = i * s1 + j * s2 + k;
    let fi = i > 0;
    let fj = j > 0;
    let fk = k > 0;
    let get = |on: bool, off: usize| if on { values[base - off] as f64 } else { 0.0 };
    get(fi, s1) + get(fj, s2) + get(fk, 1)
        - get(fi && fj, s1 + s2)
        - get(fi && fk, s1 + 1)
        - get(fj && fk, s2 + 1)
        + get(fi && fj && fk, s1 + s2 + 1)
}

/// Least-squares plane over one block, in f64. The block grid is a full
/// box, so centered coordinates decouple the normal equations; an axis of
/// extent 1 gets slope zero.
pub(crate) fn fit_plane_f64(
    values: &[f32],
    dims: [usize; 3],
    start: [usize; 3],
    size: [usize; 3],
) -> [f64; 4] {
    let mean = |m: usize| (m as f64 - 1.0) / 2.0;
    let sq_sum = |m: usize| {
        let mf = m as f64;
        mf * (mf * mf - 1.0) / 12.0
    };
    let count = (size[0] * size[1] * size[2]) as f64;
    let (m0, m1, m2) = (mean(size[0]), mean(size[1]), mean(size[2]));
    let mut sum_v = 0.0;
    let mut num = [0.0f64; 3];
    let s1 = dims[1] * dims[2];
    let s2 = dims[2];
    for li in 0..size[0] {
        for lj in 0..size[1] {
            for lk in 0..size[2] {
                let v = values[(start[0] + li) * s1 + (start[1] + lj) * s2 + start[2] + lk] as f64;
                sum_v += v;
                num[0] += v * (li as f64 - m0);
                num[1] += v * (lj as f64 - m1);
                num[2] += v * (lk as f64 - m2);
            }
        }
    }
    let den = [
        (size[1] * size[2]) as f64 * sq_sum(size[0]),
        (size[0] * size[2]) as f64 * sq_sum(size[1]),
        (size[0] * size[1]) as f64 * sq_sum(size[2]),
    ];
    let slope = |a: usize| if den[a] == 0.0 { 0.0 } else { num[a] / den[a] };
    let (a, b, c) = (slope(0), slope(1), slope(2));
    let d = sum_v / count - a * m0 - b * m1 - c * m2;
    [a, b, c, d]
}

#[inline]
fn plane_eval(c: [f32; 4], local: [f64; 3]) -> f64 {
    c[0] as f64 * local[0] + c[1] as f64 * local[1] + c[2] as f64 * local[2] + c[3] as f64
}

/// Pick a predictor per block on the original values. Returns the
/// regression mask and, for every block, the (possibly unused) f32 plane
/// coefficients.
fn choose_predictors(
    values: &[f32],
    dims: [usize; 3],
    blocks: &Blocks,
) -> (BitMask, Vec<[f32; 4]>) {
    let mut mask = BitMask::new(blocks.n_blocks());
    let mut coeffs = vec![[0f32; 4]; blocks.n_blocks()];
    let s1 = dims[1] * dims[2];
    let s2 = dims[2];
    for b in 0..blocks.n_blocks() {
        let start = blocks.starts[b];
        let size = blocks.sizes[b];
        if size[0] * size[1] * size[2] < 4 {
            continue;
        }
        let plane = fit_plane_f64(values, dims, start, size);
        let plane32 = [plane[0] as f32, plane[1] as f32, plane[2] as f32, plane[3] as f32];
        if plane32.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let mut cost_lorenzo = 0.0f64;
        let mut cost_plane = 0.0f64;
        for li in 0..size[0] {
            for lj in 0..size[1] {
                for lk in 0..size[2] {
                    let (i, j, k) = (start[0] + li, start[1] + lj, start[2] + lk);
                    let x = values[i * s1 + j * s2 + k] as f64;
                    cost_lorenzo += (x - lorenzo_at(values, dims, i, j, k)).abs();
                    cost_plane +=
                        (x - plane_eval(plane32, [li as f64, lj as f64, lk as f64])).abs();
                }
            }
        }
        if cost_plane < cost_lorenzo {
            mask.set(b, true);
            coeffs[b] = plane32;
        }
    }
    (mask, coeffs)
}

#[inline]
fn predict(
    recon: &[f32],
    dims: [usize; 3],
    blocks: &Blocks,
    mask: &BitMask,
    coeffs: &[[f32; 4]],
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    let (b, local) = blocks.at(i, j, k);
    if mask.get(b) {
        plane_eval(coeffs[b], local)
    } else {
        lorenzo_at(recon, dims, i, j, k)
    }
}

pub fn encode(values: &[f32], dims: [usize; 3], params: &PredParams) -> Result<Vec<u8>> {
    params.validate()?;
    let n: usize = dims.iter().product();
    if values.len() != n {
        return Err(Error::DimsMismatch { left: vec![values.len()], right: dims.to_vec() });
    }
    let blocks = Blocks::new(dims, params.block_edge);
    let (mask, coeffs) = choose_predictors(values, dims, &blocks);

    let half = (params.quant_cap / 2) as i64;
    let max_q = (half - 1) as f64;
    let twob = 2.0 * params.abs_bound;
    let mut recon = vec![0f32; n];
    let mut codes: Vec<u32> = Vec::with_capacity(n);
    let mut outliers: Vec<(u64, f32)> = Vec::new();
    let mut idx = 0usize;
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let pred = predict(&recon, dims, &blocks, &mask, &coeffs, i, j, k);
                let x = values[idx] as f64;
                let qf = ((x - pred) / twob).round();
                let mut accepted = false;
                if qf.is_finite() && qf.abs() <= max_q {
                    let q = qf as i64;
                    let r32 = (pred + twob * q as f64) as f32;
                    if (r32 as f64 - x).abs() <= params.abs_bound {
                        codes.push((q + half) as u32);
                        recon[idx] = r32;
                        accepted = true;
                    }
                }
                if !accepted {
                    codes.push(0);
                    outliers.push((idx as u64, values[idx]));
                    recon[idx] = values[idx];
                }
                idx += 1;
            }
        }
    }

    let table = HuffmanTable::from_symbols(&codes)?;
    let encoder = table.encoder();
    let mut bw = BitWriter::with_capacity(n * 4);
    for &c in &codes {
        encoder.encode(c, &mut bw)?;
    }
    let (coded, nbits) = bw.finish();

    let mut out = Vec::with_capacity(coded.len() + outliers.len() * 12 + 64);
    out.push(0u8); // flags
    out.push(params.block_edge as u8);
    out.extend_from_slice(&params.quant_cap.to_le_bytes());
    out.extend_from_slice(mask.as_bytes());
    for b in 0..blocks.n_blocks() {
        if mask.get(b) {
            for c in coeffs[b] {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    table.serialize(&mut out);
    out.extend_from_slice(&(nbits as u64).to_le_bytes());
    out.extend_from_slice(&coded);
    out.extend_from_slice(&(outliers.len() as u64).to_le_bytes());
    for &(oi, ov) in &outliers {
        out.extend_from_slice(&oi.to_le_bytes());
        out.extend_from_slice(&ov.to_le_bytes());
    }
    Ok(out)
}

/// Decode a payload produced by [`encode`]. Returns the values and the
/// payload flags; when the pw-rel flag is set, the caller owns the mask
/// bytes left at the tail (this function checks only their length).
pub fn decode(payload: &[u8], dims: [usize; 3], abs_bound: f64) -> Result<(Vec<f32>, u8)> {
    if !abs_bound.is_finite() || abs_bound <= 0.0 {
        return Err(Error::Domain(format!("bad absolute bound {abs_bound}")));
    }
    let n: usize = dims.iter().product();
    let mut r = ByteReader::new(payload);
    let flags = r.u8()?;
    if flags & !FLAG_PW_REL_MASKS != 0 {
        return Err(Error::Format(format!("unknown payload flags {flags:#x}")));
    }
    let edge = r.u8()? as usize;
    if edge == 0 || edge > 64 {
        return Err(Error::Format(format!("bad block edge {edge}")));
    }
    let cap = r.u32()?;
    if cap < 4 || cap % 2 != 0 {
        return Err(Error::Format(format!("bad quantizer capacity {cap}")));
    }
    let blocks = Blocks::new(dims, edge);
    let nb = blocks.n_blocks();
    let mask = BitMask::from_bytes(r.take(nb.div_ceil(8))?.to_vec(), nb)?;
    let mut coeffs = vec![[0f32; 4]; nb];
    for (b, c) in coeffs.iter_mut().enumerate() {
        if mask.get(b) {
            for v in c.iter_mut() {
                *v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::Format("non-finite plane coefficient".into()));
                }
            }
        }
    }
    let table = HuffmanTable::deserialize(&mut r)?;
    let nbits = r.u64()? as usize;
    let coded = r.take(nbits.div_ceil(8))?;
    let mut br = BitReader::new(coded, nbits)?;
    let codes = table.decoder().decode_all(&mut br, n)?;
    if br.remaining() != 0 {
        return Err(Error::Format("trailing bits after coded symbols".into()));
    }
    let n_out = r.u64()? as usize;
    if n_out > n {
        return Err(Error::Format(format!("{n_out} outliers for {n} values")));
    }
    let mut outliers = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        let oi = r.u64()?;
        let ov = r.f32()?;
        if oi as usize >= n || outliers.last().is_some_and(|&(p, _)| oi <= p) {
            return Err(Error::Format("outlier indices must be increasing and in range".into()));
        }
        outliers.push((oi, ov));
    }
    let mask_tail = if flags & FLAG_PW_REL_MASKS != 0 { 2 * n.div_ceil(8) } else { 0 };
    if r.remaining() != mask_tail {
        return Err(Error::Format(format!(
            "payload tail is {} bytes, expected {mask_tail}",
            r.remaining()
        )));
    }

    let half = (cap / 2) as i64;
    let twob = 2.0 * abs_bound;
    let mut recon = vec![0f32; n];
    let mut cursor = 0usize;
    let mut idx = 0usize;
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let pred = predict(&recon, dims, &blocks, &mask, &coeffs, i, j, k);
                let code = codes[idx];
                if code == 0 {
                    match outliers.get(cursor) {
                        Some(&(oi, ov)) if oi as usize == idx => {
                            recon[idx] = ov;
                            cursor += 1;
                        }
                        _ => {
                            return Err(Error::Format(format!(
                                "outlier sentinel at value {idx} has no matching record"
                            )))
                        }
                    }
                } else {
                    if code >= cap {
                        return Err(Error::Format(format!("quantizer code {code} out of range")));
                    }
                    let q = code as i64 - half;
                    recon[idx] = (pred + twob * q as f64) as f32;
                }
                idx += 1;
            }
        }
    }
    if cursor != outliers.len() {
        return Err(Error::Format("outlier records without sentinels".into()));
    }
    Ok((recon, flags))
}
