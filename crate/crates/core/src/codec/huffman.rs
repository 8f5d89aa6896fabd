//! Deterministic canonical Huffman coding for quantization codes.
//!
//! Code lengths come from a binary heap where ties are broken by node
//! creation order (leaves first, in ascending symbol order), so the same
//! symbol counts always produce the same table. Codes are then assigned
//! canonically: symbols sorted by (length, symbol), each code being
//! `(previous + 1) << (len - previous_len)`. Only the (symbol, length)
//! pairs are serialized; both sides rebuild identical codes from them.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use crate::codec::bits::{BitReader, BitWriter};
use crate::datamodel::ByteReader;
use crate::error::{Error, Result};

/// Longest admissible code, in bits. Depth of a Huffman tree over counts
/// totalling N is bounded by log_phi(N), so 63 covers any input that fits
/// in memory.
const MAX_LEN: u8 = 63;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    /// (symbol, code length), ascending by symbol. A single entry with
    /// length 0 encodes the degenerate one-symbol alphabet.
    entries: Vec<(u32, u8)>,
}

impl HuffmanTable {
    /// Build a table from symbol counts, which must be sorted by symbol
    /// ascending with every count nonzero.
    pub fn from_counts(counts: &[(u32, u64)]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Domain("huffman: empty symbol alphabet".into()));
        }
        for w in counts.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Domain("huffman: counts must be sorted by symbol".into()));
            }
        }
        if counts.iter().any(|&(_, c)| c == 0) {
            return Err(Error::Domain("huffman: zero count".into()));
        }
        if counts.len() == 1 {
            return Ok(HuffmanTable { entries: vec![(counts[0].0, 0)] });
        }

        // Parent-pointer tree. Nodes 0..n are leaves; merges append.
        let n = counts.len();
        let mut parent: Vec<usize> = vec![usize::MAX; n];
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..n)
            .map(|i| Reverse((counts[i].1, i)))
            .collect();
        while heap.len() > 1 {
            let Reverse((wa, a)) = heap.pop().unwrap();
            let Reverse((wb, b)) = heap.pop().unwrap();
            let node = parent.len();
            parent.push(usize::MAX);
            parent[a] = node;
            parent[b] = node;
            heap.push(Reverse((wa + wb, node)));
        }

        let mut entries = Vec::with_capacity(n);
        for (i, &(sym, _)) in counts.iter().enumerate() {
            let mut len = 0u8;
            let mut at = i;
            while parent[at] != usize::MAX {
                at = parent[at];
                len += 1;
            }
            debug_assert!(len >= 1 && len <= MAX_LEN);
            entries.push((sym, len));
        }
        Ok(HuffmanTable { entries })
    }

    /// Table for a symbol slice; counts are gathered here.
    pub fn from_symbols(symbols: &[u32]) -> Result<Self> {
        let mut counts = std::collections::BTreeMap::new();
        for &s in symbols {
            *counts.entry(s).or_insert(0u64) += 1;
        }
        let counts: Vec<(u32, u64)> = counts.into_iter().collect();
        Self::from_counts(&counts)
    }

    pub fn entries(&self) -> &[(u32, u8)] {
        &self.entries
    }

    /// Symbols sorted by (length, symbol) alongside their canonical codes.
    fn canonical_codes(&self) -> Vec<(u32, u8, u64)> {
        let mut order: Vec<(u32, u8)> = self.entries.clone();
        order.sort_by_key(|&(sym, len)| (len, sym));
        let mut out = Vec::with_capacity(order.len());
        let mut code = 0u64;
        let mut prev_len = 0u8;
        for (i, &(sym, len)) in order.iter().enumerate() {
            if i > 0 {
                code = (code + 1) << (len - prev_len);
            } else {
                code = 0;
            }
            prev_len = len;
            out.push((sym, len, code));
        }
        out
    }

    /// Check the lengths describe a complete prefix code.
    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Format("huffman table: no entries".into()));
        }
        for w in self.entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Format("huffman table: symbols not ascending".into()));
            }
        }
        if self.entries.len() == 1 {
            return match self.entries[0].1 {
                0 => Ok(()),
                _ => Err(Error::Format("huffman table: single symbol must have length 0".into())),
            };
        }
        let mut kraft: u128 = 0;
        for &(_, len) in &self.entries {
            if len == 0 || len > MAX_LEN {
                return Err(Error::Format(format!("huffman table: bad code length {len}")));
            }
            kraft += 1u128 << (MAX_LEN - len);
        }
        if kraft != 1u128 << MAX_LEN {
            return Err(Error::Format("huffman table: incomplete or oversubscribed code".into()));
        }
        Ok(())
    }

    /// Append the wire form: entry count then (symbol, length) pairs.
    pub fn serialize(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for &(sym, len) in &self.entries {
            out.extend_from_slice(&sym.to_le_bytes());
            out.push(len);
        }
    }

    pub fn deserialize(r: &mut ByteReader) -> Result<Self> {
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let sym = r.u32()?;
            let len = r.u8()?;
            entries.push((sym, len));
        }
        let table = HuffmanTable { entries };
        table.validate()?;
        Ok(table)
    }

    pub fn encoder(&self) -> Encoder {
        let mut map = HashMap::with_capacity(self.entries.len());
        for (sym, len, code) in self.canonical_codes() {
            map.insert(sym, (code, len));
        }
        Encoder { map }
    }

    pub fn decoder(&self) -> Decoder {
        let canon = self.canonical_codes();
        if canon.len() == 1 && canon[0].1 == 0 {
            return Decoder { fill: Some(canon[0].0), symbols: vec![], groups: vec![] };
        }
        let symbols: Vec<u32> = canon.iter().map(|&(s, _, _)| s).collect();
        let mut groups: Vec<LenGroup> = Vec::new();
        for (i, &(_, len, code)) in canon.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if g.len == len => g.count += 1,
                _ => groups.push(LenGroup { len, first_code: code, first_index: i, count: 1 }),
            }
        }
        Decoder { fill: None, symbols, groups }
    }
}

#[derive(Debug, Clone)]
struct LenGroup {
    len: u8,
    first_code: u64,
    first_index: usize,
    count: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    map: HashMap<u32, (u64, u8)>,
}

impl Encoder {
    pub fn encode(&self, symbol: u32, out: &mut BitWriter) -> Result<()> {
        let &(code, len) = self
            .map
            .get(&symbol)
            .ok_or_else(|| Error::Domain(format!("huffman: symbol {symbol} not in table")))?;
        out.write_bits(code, len as usize);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    /// Set when the alphabet has one symbol: no bits are read at all.
    fill: Option<u32>,
    symbols: Vec<u32>,
    groups: Vec<LenGroup>,
}

impl Decoder {
    pub fn decode_one(&self, r: &mut BitReader) -> Result<u32> {
        if let Some(sym) = self.fill {
            return Ok(sym);
        }
        let mut code = 0u64;
        let mut len = 0u8;
        for g in &self.groups {
            while len < g.len {
                code = (code << 1) | r.read_bit()? as u64;
                len += 1;
            }
            let offset = code.wrapping_sub(g.first_code);
            if code >= g.first_code && (offset as usize) < g.count {
                return Ok(self.symbols[g.first_index + offset as usize]);
            }
        }
        Err(Error::Format("huffman: invalid code in bitstream".into()))
    }

    pub fn decode_all(&self, r: &mut BitReader, count: usize) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.decode_one(r)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::CounterRng;

    fn round_trip(symbols: &[u32]) -> (HuffmanTable, Vec<u32>) {
        let table = HuffmanTable::from_symbols(symbols).unwrap();
        let enc = table.encoder();
        let mut w = BitWriter::new();
        for &s in symbols {
            enc.encode(s, &mut w).unwrap();
        }
        let (bytes, nbits) = w.finish();
        let mut r = BitReader::new(&bytes, nbits).unwrap();
        let decoded = table.decoder().decode_all(&mut r, symbols.len()).unwrap();
        assert_eq!(r.remaining(), 0, "decoder must consume the exact bit count");
        (table, decoded)
    }

    #[test]
    fn skewed_stream_round_trips() {
        let mut rng = CounterRng::new(11);
        let symbols: Vec<u32> = (0..20_000)
            .map(|_| {
                // Geometric-ish skew over a small alphabet.
                let u = rng.uniform();
                (-(1.0 - u).ln() * 3.0) as u32
            })
            .collect();
        let (_, decoded) = round_trip(&symbols);
        assert_eq!(decoded, symbols);
    }

    #[test]
    fn single_symbol_uses_zero_bits() {
        let symbols = vec![42u32; 1000];
        let table = HuffmanTable::from_symbols(&symbols).unwrap();
        assert_eq!(table.entries(), &[(42, 0)]);
        let enc = table.encoder();
        let mut w = BitWriter::new();
        for &s in &symbols {
            enc.encode(s, &mut w).unwrap();
        }
        let (bytes, nbits) = w.finish();
        assert_eq!(nbits, 0);
        let mut r = BitReader::new(&bytes, nbits).unwrap();
        let decoded = table.decoder().decode_all(&mut r, 1000).unwrap();
        assert_eq!(decoded, symbols);
    }

    #[test]
    fn average_length_within_entropy_plus_one() {
        let mut rng = CounterRng::new(7);
        let symbols: Vec<u32> = (0..50_000).map(|_| (rng.uniform() * rng.uniform() * 40.0) as u32).collect();
        let table = HuffmanTable::from_symbols(&symbols).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for &s in &symbols {
            *counts.entry(s).or_insert(0u64) += 1;
        }
        let n = symbols.len() as f64;
        let entropy: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum();
        let lens: std::collections::HashMap<u32, u8> = table.entries().iter().copied().collect();
        let avg: f64 = counts.iter().map(|(&s, &c)| c as f64 * lens[&s] as f64).sum::<f64>() / n;
        assert!(avg >= entropy - 1e-9, "avg {avg} below entropy {entropy}");
        assert!(avg <= entropy + 1.0, "avg {avg} exceeds entropy {entropy} + 1");
    }

    #[test]
    fn serialization_is_deterministic_and_round_trips() {
        let counts = vec![(3u32, 7u64), (9, 7), (11, 2), (500, 90), (501, 1)];
        let a = HuffmanTable::from_counts(&counts).unwrap();
        let b = HuffmanTable::from_counts(&counts).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.serialize(&mut wa);
        b.serialize(&mut wb);
        assert_eq!(wa, wb);
        let mut r = ByteReader::new(&wa);
        let back = HuffmanTable::deserialize(&mut r).unwrap();
        assert_eq!(back, a);
        assert_eq!(r.remaining(), 0);
    }

    #[test]
    fn equal_counts_break_ties_by_symbol() {
        // Four symbols, all equal weight: a balanced tree, all lengths 2,
        // codes assigned in symbol order.
        let counts = vec![(10u32, 5u64), (20, 5), (30, 5), (40, 5)];
        let table = HuffmanTable::from_counts(&counts).unwrap();
        assert!(table.entries().iter().all(|&(_, len)| len == 2));
        let codes = table.canonical_codes();
        assert_eq!(codes, vec![(10, 2, 0b00), (20, 2, 0b01), (30, 2, 0b10), (40, 2, 0b11)]);
    }

    #[test]
    fn garbled_tables_are_rejected() {
        // Symbols out of order.
        let mut bytes = Vec::new();
        HuffmanTable { entries: vec![(5, 1), (2, 1)] }.serialize(&mut bytes);
        assert!(HuffmanTable::deserialize(&mut ByteReader::new(&bytes)).is_err());

        // Incomplete code (Kraft sum below 1).
        let mut bytes = Vec::new();
        HuffmanTable { entries: vec![(1, 2), (2, 2), (3, 2)] }.serialize(&mut bytes);
        assert!(HuffmanTable::deserialize(&mut ByteReader::new(&bytes)).is_err());

        // Oversubscribed.
        let mut bytes = Vec::new();
        HuffmanTable { entries: vec![(1, 1), (2, 1), (3, 1)] }.serialize(&mut bytes);
        assert!(HuffmanTable::deserialize(&mut ByteReader::new(&bytes)).is_err());

        // Truncated serialization.
        let mut bytes = Vec::new();
        HuffmanTable { entries: vec![(1, 1), (2, 1)] }.serialize(&mut bytes);
        bytes.truncate(bytes.len() - 3);
        assert!(HuffmanTable::deserialize(&mut ByteReader::new(&bytes)).is_err());
    }

    #[test]
    fn truncated_bitstream_fails_cleanly() {
        let symbols: Vec<u32> = (0..100).map(|i| i % 5).collect();
        let table = HuffmanTable::from_symbols(&symbols).unwrap();
        let enc = table.encoder();
        let mut w = BitWriter::new();
        for &s in &symbols {
            enc.encode(s, &mut w).unwrap();
        }
        let (bytes, nbits) = w.finish();
        let mut r = BitReader::new(&bytes, nbits / 2).unwrap();
        assert!(table.decoder().decode_all(&mut r, 100).is_err());
    }
}
