//! MSB-first bit stream reader and writer shared by both codecs.

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    nbits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitWriter { bytes: Vec::with_capacity(bits.div_ceil(8)), nbits: 0 }
    }

    pub fn len_bits(&self) -> usize {
        self.nbits
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.nbits % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.nbits % 8);
        }
        self.nbits += 1;
    }

    /// Write the low `n` bits of `value`, most significant of those first.
    pub fn write_bits(&mut self, value: u64, n: usize) {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 != 0);
        }
    }

    /// Splice `nbits` bits from another stream's bytes onto this one.
    pub fn append(&mut self, bytes: &[u8], nbits: usize) {
        debug_assert!(nbits <= bytes.len() * 8);
        if self.nbits % 8 == 0 {
            // Fast path: byte-aligned destination.
            let full = nbits / 8;
            self.bytes.extend_from_slice(&bytes[..full]);
            self.nbits += full * 8;
            for i in full * 8..nbits {
                self.write_bit(bytes[i / 8] & (0x80 >> (i % 8)) != 0);
            }
        } else {
            for i in 0..nbits {
                self.write_bit(bytes[i / 8] & (0x80 >> (i % 8)) != 0);
            }
        }
    }

    /// Append zero bits until the stream holds exactly `nbits` total.
    pub fn pad_to(&mut self, nbits: usize) {
        debug_assert!(nbits >= self.nbits);
        while self.nbits < nbits {
            self.write_bit(false);
        }
    }

    /// Finish, returning the backing bytes (zero-padded) and the bit count.
    pub fn finish(self) -> (Vec<u8>, usize) {
        (self.bytes, self.nbits)
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    nbits: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    /// Read up to `nbits` bits of `bytes`.
    pub fn new(bytes: &'a [u8], nbits: usize) -> Result<Self> {
        if nbits > bytes.len() * 8 {
            return Err(Error::Truncated {
                needed: nbits.div_ceil(8),
                available: bytes.len(),
            });
        }
        Ok(BitReader { bytes, nbits, pos: 0 })
    }

    /// Start reading at an absolute bit offset.
    pub fn seek(&mut self, bit: usize) -> Result<()> {
        if bit > self.nbits {
            return Err(Error::Truncated { needed: bit.div_ceil(8), available: self.bytes.len() });
        }
        self.pos = bit;
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.nbits - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.nbits {
            return Err(Error::Truncated {
                needed: self.pos / 8 + 1,
                available: self.nbits / 8,
            });
        }
        let b = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(b)
    }

    pub fn read_bits(&mut self, n: usize) -> Result<u64> {
        debug_assert!(n <= 64);
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_layout() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3);
        let (bytes, n) = w.finish();
        assert_eq!(n, 3);
        assert_eq!(bytes, vec![0b1010_0000]);
    }

    #[test]
    fn round_trip_values() {
        let mut w = BitWriter::new();
        let cases = [(0u64, 1), (1, 1), (0xAB, 8), (0x3FF, 10), (u64::MAX, 64), (0x5, 3)];
        for &(v, n) in &cases {
            w.write_bits(v, n);
        }
        let (bytes, total) = w.finish();
        let mut r = BitReader::new(&bytes, total).unwrap();
        for &(v, n) in &cases {
            assert_eq!(r.read_bits(n).unwrap(), v);
        }
        assert!(r.read_bit().is_err());
    }

    #[test]
    fn append_splices_across_alignment() {
        let mut first = BitWriter::new();
        first.write_bits(0b11011, 5);
        let (fb, fn_) = first.finish();
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3); // misalign
        w.append(&fb, fn_);
        let (bytes, total) = w.finish();
        assert_eq!(total, 8);
        assert_eq!(bytes, vec![0b1011_1011]);

        // Aligned fast path.
        let mut w2 = BitWriter::new();
        w2.write_bits(0xFF, 8);
        w2.append(&fb, fn_);
        let (bytes2, total2) = w2.finish();
        assert_eq!(total2, 13);
        assert_eq!(bytes2, vec![0xFF, 0b1101_1000]);
    }

    #[test]
    fn pad_to_fills_zeros() {
        let mut w = BitWriter::new();
        w.write_bit(true);
        w.pad_to(12);
        let (bytes, n) = w.finish();
        assert_eq!(n, 12);
        assert_eq!(bytes, vec![0x80, 0x00]);
    }

    #[test]
    fn reader_rejects_overrun_window() {
        assert!(BitReader::new(&[0u8], 9).is_err());
        let mut r = BitReader::new(&[0xF0], 4).unwrap();
        assert_eq!(r.read_bits(4).unwrap(), 0xF);
        assert!(r.read_bit().is_err());
        assert!(r.seek(5).is_err());
        r.seek(2).unwrap();
        assert_eq!(r.read_bits(2).unwrap(), 0b11);
    }
}
