//! Fixed-rate block-transform codec.
//!
//! The field is cut into 4x4x4 blocks (edges replicate the last sample).
//! Each block is normalized by a shared power-of-two exponent, scaled to
//! integers, run through an exactly invertible integer butterfly
//! transform along each axis, and bit-plane coded in sequency order into
//! a hard per-block budget of `round(bitrate * 64)` bits. Every block
//! consumes exactly its budget, so the compressed size depends only on
//! the grid shape and the bitrate.
//!
//! Bit planes are emitted most significant first; a coefficient's sign
//! bit immediately follows its first set magnitude bit. If the budget
//! ends between the two, the decoder drops that magnitude bit, which
//! keeps every coefficient's error non-increasing as bits are added.

use rayon::prelude::*;
use std::sync::OnceLock;

use crate::codec::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

pub const DEFAULT_FIXED_POINT_BITS: u8 = 30;

/// Bit-plane count: the per-axis transform triples the worst-case
/// magnitude (rows of L1 gain 1, 3, 2, 2), so three axes multiply the
/// `2^fixed_point_bits` input range by at most 27 < 2^5.
const GAIN_PLANES: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub bitrate: f64,
    pub fixed_point_bits: u8,
}

impl BlockParams {
    pub fn new(bitrate: f64) -> Self {
        BlockParams { bitrate, fixed_point_bits: DEFAULT_FIXED_POINT_BITS }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bitrate.is_finite() || self.bitrate <= 0.0 || self.bitrate > 32.0 {
            return Err(Error::Config(format!(
                "bitrate must be in (0, 32] bits per value, got {}",
                self.bitrate
            )));
        }
        if bits_per_block(self.bitrate) < 8 {
            return Err(Error::Config(format!(
                "bitrate {} leaves no room for the 8-bit block exponent",
                self.bitrate
            )));
        }
        if !(4..=50).contains(&self.fixed_point_bits) {
            return Err(Error::Config(format!(
                "fixed-point precision must be in 4..=50, got {}",
                self.fixed_point_bits
            )));
        }
        Ok(())
    }
}

/// Fixed bit budget per 4x4x4 block, exponent byte included.
pub fn bits_per_block(bitrate: f64) -> usize {
    (bitrate * 64.0).round() as usize
}

/// Forward butterfly over one 4-vector. Exactly inverted by [`inv_lift`].
///
/// Public so external checks can exercise the integer transform in
/// isolation; regular callers go through [`encode`] and [`decode`].
#[inline]
pub fn fwd_lift(v: &mut [i64; 4]) {
    let [mut x, mut y, mut z, mut w] = *v;
    w -= x;
    x += w >> 1;
    y -= z;
    z += y >> 1;
    z -= x;
    x += z >> 1;
    y -= w;
    w += y >> 1;
    w += y >> 1;
    y -= w >> 1;
    *v = [x, y, z, w];
}

#[inline]
pub fn inv_lift(v: &mut [i64; 4]) {
    let [mut x, mut y, mut z, mut w] = *v;
    y += w >> 1;
    w -= y >> 1;
    w -= y >> 1;
    y += w;
    x -= z >> 1;
    z += x;
    z -= y >> 1;
    y += z;
    x -= w >> 1;
    w += x;
    *v = [x, y, z, w];
}

#[inline]
fn lift_strided(b: &mut [i64; 64], start: usize, stride: usize, forward: bool) {
    let mut v = [b[start], b[start + stride], b[start + 2 * stride], b[start + 3 * stride]];
    if forward {
        fwd_lift(&mut v);
    } else {
        inv_lift(&mut v);
    }
    b[start] = v[0];
    b[start + stride] = v[1];
    b[start + 2 * stride] = v[2];
    b[start + 3 * stride] = v[3];
}

/// Transform along dim2, then dim1, then dim0.
pub fn fwd_xform(b: &mut [i64; 64]) {
    for r in 0..16 {
        lift_strided(b, r * 4, 1, true);
    }
    for i in 0..4 {
        for k in 0..4 {
            lift_strided(b, i * 16 + k, 4, true);
        }
    }
    for t in 0..16 {
        lift_strided(b, t, 16, true);
    }
}

pub fn inv_xform(b: &mut [i64; 64]) {
    for t in 0..16 {
        lift_strided(b, t, 16, false);
    }
    for i in 0..4 {
        for k in 0..4 {
            lift_strided(b, i * 16 + k, 4, false);
        }
    }
    for r in 0..16 {
        lift_strided(b, r * 4, 1, false);
    }
}

/// Coefficient visitation order: ascending total frequency `i + j + k`
/// (the per-axis position index is its frequency: 0 carries the mean),
/// ties broken lexicographically. The DC coefficient comes first.
fn seq_order() -> &'static [usize; 64] {
    static ORDER: OnceLock<[usize; 64]> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut idx: Vec<usize> = (0..64).collect();
        idx.sort_by_key(|&t| {
            let (i, j, k) = (t >> 4, (t >> 2) & 3, t & 3);
            (i + j + k, i, j, k)
        });
        idx.try_into().unwrap()
    })
}

/// Emit one block's coefficients plane by plane into `out`, spending at
/// most `budget` bits. The bit sequence depends only on the data, so a
/// larger budget extends a smaller one — truncation is refinement.
///
/// Public for the same reason as [`fwd_xform`]: external checks drive the
/// embedded coder in isolation. Regular callers use [`encode`].
pub fn encode_block_planes(ints: &[i64; 64], total_planes: u32, budget: usize, out: &mut BitWriter) {
    let order = seq_order();
    let bit_of = |pos: usize, p: u32| (ints[pos].unsigned_abs() >> p) & 1 == 1;
    let mut significant = [false; 64];
    let mut written = 0usize;
    // High-water mark in sequency order: coefficients below it get verbatim
    // plane bits; the tail behind it is gated by group-test bits, so a plane
    // that is empty past the mark costs one bit instead of sixty-four.
    let mut group = 0usize;
    'coding: for p in (0..total_planes).rev() {
        for &pos in &order[..group] {
            if written == budget {
                break 'coding;
            }
            let bit = bit_of(pos, p);
            out.write_bit(bit);
            written += 1;
            if bit && !significant[pos] {
                if written == budget {
                    break 'coding; // sign does not fit; the decoder drops this bit
                }
                out.write_bit(ints[pos] < 0);
                written += 1;
                significant[pos] = true;
            }
        }
        let mut k = group;
        while k < 64 {
            if written == budget {
                break 'coding;
            }
            let any = order[k..].iter().any(|&pos| bit_of(pos, p));
            out.write_bit(any);
            written += 1;
            if !any {
                break; // rest of this plane is zero; the mark stays put
            }
            loop {
                let pos = order[k];
                let bit = bit_of(pos, p);
                // The final position's bit is implied: a promised set bit
                // with zeros everywhere before it can only live there.
                if k < 63 {
                    if written == budget {
                        break 'coding;
                    }
                    out.write_bit(bit);
                    written += 1;
                }
                k += 1;
                group = k;
                if bit || k == 64 {
                    if written == budget {
                        break 'coding;
                    }
                    out.write_bit(ints[pos] < 0);
                    written += 1;
                    significant[pos] = true;
                    break;
                }
            }
        }
    }
    for _ in written..budget {
        out.write_bit(false);
    }
}

/// Inverse of [`encode_block_planes`]: reads at most `budget` bits and
/// returns the partially refined coefficients.
pub fn decode_block_planes(
    r: &mut BitReader,
    total_planes: u32,
    budget: usize,
) -> Result<[i64; 64]> {
    let order = seq_order();
    let mut mags = [0u64; 64];
    let mut neg = [false; 64];
    let mut significant = [false; 64];
    let mut group = 0usize;
    let mut read = 0usize;
    'coding: for p in (0..total_planes).rev() {
        for &pos in &order[..group] {
            if read == budget {
                break 'coding;
            }
            let bit = r.read_bit()?;
            read += 1;
            if !bit {
                continue;
            }
            if significant[pos] {
                mags[pos] |= 1 << p;
            } else if read == budget {
                break 'coding; // truncated before the sign: treat as insignificant
            } else {
                neg[pos] = r.read_bit()?;
                read += 1;
                mags[pos] |= 1 << p;
                significant[pos] = true;
            }
        }
        let mut k = group;
        while k < 64 {
            if read == budget {
                break 'coding;
            }
            let any = r.read_bit()?;
            read += 1;
            if !any {
                break;
            }
            loop {
                let pos = order[k];
                let bit = if k < 63 {
                    if read == budget {
                        break 'coding;
                    }
                    read += 1;
                    r.read_bit()?
                } else {
                    true
                };
                k += 1;
                group = k;
                if bit || k == 64 {
                    if read == budget {
                        break 'coding;
                    }
                    neg[pos] = r.read_bit()?;
                    read += 1;
                    mags[pos] |= 1 << p;
                    significant[pos] = true;
                    break;
                }
            }
        }
    }
    Ok(std::array::from_fn(|t| {
        let m = mags[t] as i64;
        if neg[t] {
            -m
        } else {
            m
        }
    }))
}

/// Shared exponent byte for a block with max magnitude `m > 0`: the raw
/// f32 exponent field, so scaling by `2^(fixed_point_bits - (byte - 126))`
/// lands every value strictly inside the fixed-point range. Finite input
/// keeps the byte at or below 254; 255 marks an all-zero block.
const ZERO_BLOCK: u8 = 255;

fn block_exponent(m: f32) -> u8 {
    debug_assert!(m > 0.0 && m.is_finite());
    (m.to_bits() >> 23) as u8
}

fn block_grid(dims: [usize; 3]) -> [usize; 3] {
    [dims[0].div_ceil(4), dims[1].div_ceil(4), dims[2].div_ceil(4)]
}

pub fn n_blocks(dims: [usize; 3]) -> usize {
    let nb = block_grid(dims);
    nb[0] * nb[1] * nb[2]
}

pub fn encode(values: &[f32], dims: [usize; 3], params: &BlockParams) -> Result<Vec<u8>> {
    params.validate()?;
    let n: usize = dims.iter().product();
    if values.len() != n {
        return Err(Error::DimsMismatch { left: vec![values.len()], right: dims.to_vec() });
    }
    let bpb = bits_per_block(params.bitrate);
    let nb = block_grid(dims);
    let total_planes = params.fixed_point_bits as u32 + GAIN_PLANES;
    let s1 = dims[1] * dims[2];
    let s2 = dims[2];

    let chunks: Vec<(Vec<u8>, usize)> = (0..nb[0] * nb[1] * nb[2])
        .into_par_iter()
        .map(|b| {
            let b2 = b % nb[2];
            let b1 = (b / nb[2]) % nb[1];
            let b0 = b / (nb[1] * nb[2]);
            let mut cell = [0f32; 64];
            for i in 0..4 {
                let gi = (b0 * 4 + i).min(dims[0] - 1);
                for j in 0..4 {
                    let gj = (b1 * 4 + j).min(dims[1] - 1);
                    for k in 0..4 {
                        let gk = (b2 * 4 + k).min(dims[2] - 1);
                        cell[i * 16 + j * 4 + k] = values[gi * s1 + gj * s2 + gk];
                    }
                }
            }
            let m = cell.iter().fold(0f32, |a, &v| a.max(v.abs()));
            let mut w = BitWriter::with_capacity(bpb);
            if m == 0.0 {
                w.write_bits(ZERO_BLOCK as u64, 8);
            } else {
                let ebyte = block_exponent(m);
                let scale = 2f64.powi(params.fixed_point_bits as i32 - (ebyte as i32 - 126));
                let mut ints = [0i64; 64];
                for (t, &v) in cell.iter().enumerate() {
                    ints[t] = (v as f64 * scale).round() as i64;
                }
                fwd_xform(&mut ints);
                w.write_bits(ebyte as u64, 8);
                encode_block_planes(&ints, total_planes, bpb - 8, &mut w);
            }
            w.pad_to(bpb);
            w.finish()
        })
        .collect();

    let mut stream = BitWriter::with_capacity(chunks.len() * bpb);
    for (bytes, nbits) in &chunks {
        debug_assert_eq!(*nbits, bpb);
        stream.append(bytes, *nbits);
    }
    let (bytes, nbits) = stream.finish();
    debug_assert_eq!(nbits, n_blocks(dims) * bpb);
    let mut out = Vec::with_capacity(1 + bytes.len());
    out.push(params.fixed_point_bits);
    out.extend_from_slice(&bytes);
    Ok(out)
}

pub fn decode(payload: &[u8], dims: [usize; 3], bitrate: f64) -> Result<Vec<f32>> {
    if payload.is_empty() {
        return Err(Error::Truncated { needed: 1, available: 0 });
    }
    let params = BlockParams { bitrate, fixed_point_bits: payload[0] };
    params.validate().map_err(|e| Error::Format(format!("block payload header: {e}")))?;
    let bpb = bits_per_block(bitrate);
    let nb = block_grid(dims);
    let blocks = nb[0] * nb[1] * nb[2];
    let total_bits = blocks * bpb;
    let expected = 1 + total_bits.div_ceil(8);
    if payload.len() < expected {
        return Err(Error::Truncated { needed: expected, available: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "block payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let stream = &payload[1..];
    let total_planes = params.fixed_point_bits as u32 + GAIN_PLANES;

    let cells: Vec<[f32; 64]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = BitReader::new(stream, total_bits)?;
            r.seek(b * bpb)?;
            let ebyte = r.read_bits(8)? as u8;
            if ebyte == ZERO_BLOCK {
                return Ok([0f32; 64]);
            }
            let mut ints = decode_block_planes(&mut r, total_planes, bpb - 8)?;
            inv_xform(&mut ints);
            let scale = 2f64.powi(ebyte as i32 - 126 - params.fixed_point_bits as i32);
            Ok(std::array::from_fn(|t| (ints[t] as f64 * scale) as f32))
        })
        .collect::<Result<_>>()?;

    let s1 = dims[1] * dims[2];
    let s2 = dims[2];
    let mut out = vec![0f32; dims[0] * dims[1] * dims[2]];
    for (b, cell) in cells.iter().enumerate() {
        let b2 = b % nb[2];
        let b1 = (b / nb[2]) % nb[1];
        let b0 = b / (nb[1] * nb[2]);
        for i in 0..4 {
            let gi = b0 * 4 + i;
            if gi >= dims[0] {
                break;
            }
            for j in 0..4 {
                let gj = b1 * 4 + j;
                if gj >= dims[1] {
                    break;
                }
                for k in 0..4 {
                    let gk = b2 * 4 + k;
                    if gk >= dims[2] {
                        break;
                    }
                    out[gi * s1 + gj * s2 + gk] = cell[i * 16 + j * 4 + k];
                }
            }
        }
    }
    Ok(out)
}
