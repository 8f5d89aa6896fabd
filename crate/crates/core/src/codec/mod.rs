//! Compression entry points.
//!
//! [`compress_field`] dispatches on the (codec, mode) pair:
//!
//! * predictive codec + absolute bound: values are coded directly;
//! * predictive codec + pointwise-relative bound: values move to the log
//!   domain first, where the relative bound becomes an absolute one, and
//!   the sign and zero masks ride at the payload tail;
//! * block-transform codec + fixed rate.

pub mod bits;
pub mod block;
pub mod huffman;
pub mod pred;

use crate::datamodel::{Codec, CompressedStream, CompressionConfig, Field, Mode};
use crate::error::{Error, Result};
use crate::preprocess::{self, BitMask};

pub fn compress_field(field: &Field, config: &CompressionConfig) -> Result<CompressedStream> {
    config.validate()?;
    if let Some(i) = field.first_non_finite() {
        return Err(Error::Domain(format!(
            "field '{}' has a non-finite value at index {i}",
            field.name
        )));
    }
    let dims = field.dims3();
    let payload = match (config.codec, config.mode) {
        (Codec::Pred, Mode::Abs) => {
            pred::encode(&field.values, dims, &pred::PredParams::new(config.param))?
        }
        (Codec::Pred, Mode::PwRel) => {
            let lt = preprocess::log_forward(field, config.param)?;
            let mut payload =
                pred::encode(&lt.field.values, dims, &pred::PredParams::new(lt.abs_bound))?;
            payload[0] |= pred::FLAG_PW_REL_MASKS;
            payload.extend_from_slice(lt.signs.as_bytes());
            payload.extend_from_slice(lt.zeros.as_bytes());
            payload
        }
        (Codec::Block, Mode::FixedRate) => {
            block::encode(&field.values, dims, &block::BlockParams::new(config.param))?
        }
        (codec, mode) => {
            return Err(Error::Config(format!(
                "unsupported codec/mode pair {}/{}",
                codec.name(),
                mode.name()
            )))
        }
    };
    Ok(CompressedStream {
        codec: config.codec,
        mode: config.mode,
        dims: dims.map(|d| d as u64),
        param: config.param,
        payload,
    })
}

pub fn decompress_field(stream: &CompressedStream) -> Result<Field> {
    let dims_u: Vec<u64> = stream.dims.to_vec();
    if dims_u.iter().any(|&d| d == 0 || d > usize::MAX as u64) {
        return Err(Error::Format(format!("bad stream dims {dims_u:?}")));
    }
    let dims = [stream.dims[0] as usize, stream.dims[1] as usize, stream.dims[2] as usize];
    let n = dims.iter().product::<usize>();
    // Trailing extents of 1 restore the original rank.
    let mut out_dims: Vec<usize> = dims.to_vec();
    while out_dims.len() > 1 && *out_dims.last().unwrap() == 1 {
        out_dims.pop();
    }
    match (stream.codec, stream.mode) {
        (Codec::Pred, Mode::Abs) => {
            let (values, flags) = pred::decode(&stream.payload, dims, stream.param)?;
            if flags != 0 {
                return Err(Error::Format("mask flag set on an absolute-bound stream".into()));
            }
            Field::new("decompressed", out_dims, values, None)
        }
        (Codec::Pred, Mode::PwRel) => {
            let abs_bound = preprocess::pw_rel_abs_bound(stream.param);
            let (values, flags) = pred::decode(&stream.payload, dims, abs_bound)?;
            if flags & pred::FLAG_PW_REL_MASKS == 0 {
                return Err(Error::Format(
                    "pointwise-relative stream is missing its sign/zero masks".into(),
                ));
            }
            let mask_len = n.div_ceil(8);
            let tail = &stream.payload[stream.payload.len() - 2 * mask_len..];
            let signs = BitMask::from_bytes(tail[..mask_len].to_vec(), n)?;
            let zeros = BitMask::from_bytes(tail[mask_len..].to_vec(), n)?;
            let y = Field::new("decompressed.log", out_dims, values, None)?;
            preprocess::log_inverse(&y, &signs, &zeros)
        }
        (Codec::Block, Mode::FixedRate) => {
            let values = block::decode(&stream.payload, dims, stream.param)?;
            Field::new("decompressed", out_dims, values, None)
        }
        (codec, mode) => Err(Error::Format(format!(
            "unsupported codec/mode pair {}/{} in stream header",
            codec.name(),
            mode.name()
        ))),
    }
}
