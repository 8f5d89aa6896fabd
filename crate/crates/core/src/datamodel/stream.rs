//! On-disk container for compressed payloads.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset size  field
//! 0      4     magic "FSC1"
//! 4      2     format version (currently 1)
//! 6      1     codec tag (1 = pred, 2 = block)
//! 7      1     mode tag  (1 = abs, 2 = pw_rel, 3 = fixed_rate)
//! 8      24    dims, 3 x u64 (unused trailing dims = 1)
//! 32     8     codec parameter, f64
//! 40     8     payload length in bytes, u64
//! 48     n     payload (codec-specific, documented by each codec)
//! 48+n   4     CRC-32 of the payload
//! ```

use crate::crc32::crc32;
use crate::datamodel::{Codec, Mode};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FSC1";
pub const VERSION: u16 = 1;
/// Bytes before the payload.
pub const HEADER_BYTES: usize = 48;
/// Fixed bytes besides the payload (header plus trailing checksum).
pub const OVERHEAD_BYTES: usize = HEADER_BYTES + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedStream {
    pub codec: Codec,
    pub mode: Mode,
    /// Grid extents of the source field, trailing unused dims set to 1.
    pub dims: [u64; 3],
    /// The codec parameter (error bound or bitrate).
    pub param: f64,
    pub payload: Vec<u8>,
}

impl CompressedStream {
    pub fn n_values(&self) -> u64 {
        self.dims.iter().product()
    }

    /// Total serialized size: header, payload, checksum.
    pub fn total_bytes(&self) -> u64 {
        (OVERHEAD_BYTES + self.payload.len()) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(OVERHEAD_BYTES + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.codec.tag());
        out.push(self.mode.tag());
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.param.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&crc32(&self.payload).to_le_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:02x?}, expected \"FSC1\"")));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported stream version {version}")));
        }
        let codec_tag = r.u8()?;
        let codec = Codec::from_tag(codec_tag)
            .ok_or_else(|| Error::Format(format!("unknown codec tag {codec_tag}")))?;
        let mode_tag = r.u8()?;
        let mode = Mode::from_tag(mode_tag)
            .ok_or_else(|| Error::Format(format!("unknown mode tag {mode_tag}")))?;
        let mut dims = [0u64; 3];
        for d in &mut dims {
            *d = r.u64()?;
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Format(format!("stream dims must be positive, got {dims:?}")));
        }
        let param = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if !param.is_finite() {
            return Err(Error::Format(format!("stream parameter is not finite: {param}")));
        }
        let payload_len = r.u64()? as usize;
        let payload = r.take(payload_len)?.to_vec();
        let stored = r.u32()?;
        let computed = crc32(&payload);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes after stream", r.remaining())));
        }
        Ok(CompressedStream { codec, mode, dims, param, payload })
    }

    /// Verify the in-memory payload against a freshly computed checksum of
    /// `expected` bytes; used by decoders before trusting the payload.
    pub fn check_payload_crc(&self, expected: u32) -> Result<()> {
        let computed = crc32(&self.payload);
        if computed != expected {
            return Err(Error::Checksum { stored: expected, computed });
        }
        Ok(())
    }
}

/// Bounds-checked little-endian cursor over a byte slice.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated { needed: n, available: self.buf.len() - self.pos });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}
