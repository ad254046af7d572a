//! Packet bytes that may contain symbolic runs.

use std::fmt;

use num_bigint::BigUint;

use crate::values::{mask, AtomTable, Bits, SymValue, Value};

/// A run of bits: concrete or one symbolic atom of exactly `width` bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chunk {
    pub width: u32,
    pub value: Value,
}

/// Packet contents, most significant bit first. Adjacent concrete runs are
/// kept merged.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PacketData {
    chunks: Vec<Chunk>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadError {
    TooShort,
    /// The read mixes concrete and symbolic bits, or spans two atoms.
    Symbolic,
}

impl PacketData {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut d = PacketData::default();
        if !bytes.is_empty() {
            d.push(Value::Concrete(Bits::new(8 * bytes.len() as u32, BigUint::from_bytes_be(bytes), false)), 8 * bytes.len() as u32);
        }
        d
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len_bits(&self) -> u32 {
        self.chunks.iter().map(|c| c.width).sum()
    }

    pub fn byte_len(&self) -> u64 {
        u64::from(self.len_bits().div_ceil(8))
    }

    pub fn is_concrete(&self) -> bool {
        self.chunks.iter().all(|c| matches!(c.value, Value::Concrete(_)))
    }

    /// Appends `width` bits. Concrete values are resized, symbolic values
    /// must cover their atom exactly.
    pub fn push(&mut self, value: Value, width: u32) {
        if width == 0 {
            return;
        }
        match value {
            Value::Concrete(b) => {
                let m = b.resize(width).magnitude().clone();
                if let Some(Chunk { width: w, value: Value::Concrete(prev) }) = self.chunks.last_mut() {
                    let joined = (prev.magnitude() << width) | m;
                    *w += width;
                    *prev = Bits::new(*w, joined, false);
                } else {
                    self.chunks.push(Chunk { width, value: Value::Concrete(Bits::new(width, m, false)) });
                }
            }
            Value::Symbolic(s) => self.chunks.push(Chunk { width, value: Value::Symbolic(SymValue { width, signed: false, ..s }) }),
            Value::Undef => panic!("undefined bits in packet data"),
        }
    }

    pub fn append(&mut self, other: &PacketData) {
        for c in &other.chunks {
            self.push(c.value.clone(), c.width);
        }
    }

    /// Reads `width` bits starting `offset` bits in.
    pub fn read(&self, offset: u32, width: u32, atoms: &mut AtomTable) -> Result<Value, ReadError> {
        if offset + width > self.len_bits() {
            return Err(ReadError::TooShort);
        }
        let mut start = 0;
        let mut acc: Option<BigUint> = None;
        let mut remaining = width;
        let mut pos = offset;
        for c in &self.chunks {
            let end = start + c.width;
            if remaining > 0 && pos < end && pos >= start {
                let take = remaining.min(end - pos);
                let lsb = end - pos - take;
                match &c.value {
                    Value::Concrete(b) => {
                        let part = (b.magnitude() >> lsb) & mask(take);
                        acc = Some(match acc {
                            Some(a) => (a << take) | part,
                            None => part,
                        });
                    }
                    Value::Symbolic(s) => {
                        if take != width {
                            return Err(ReadError::Symbolic);
                        }
                        let atom = atoms.slice(s.atom, lsb, take);
                        return Ok(Value::Symbolic(SymValue { atom, width, signed: false }));
                    }
                    Value::Undef => unreachable!(),
                }
                pos += take;
                remaining -= take;
            }
            start = end;
        }
        Ok(Value::Concrete(Bits::new(width.max(1), acc.unwrap_or_default(), false)))
    }

    /// The bits from `offset` to the end.
    pub fn suffix(&self, offset: u32, atoms: &mut AtomTable) -> PacketData {
        let mut out = PacketData::default();
        let mut start = 0;
        for c in &self.chunks {
            let end = start + c.width;
            if end > offset {
                let from = offset.max(start);
                let take = end - from;
                match &c.value {
                    Value::Concrete(b) => out.push(Value::Concrete(Bits::new(take, b.magnitude() & mask(take), false)), take),
                    Value::Symbolic(s) => {
                        let atom = atoms.slice(s.atom, 0, take);
                        out.push(Value::Symbolic(SymValue { atom, width: take, signed: false }), take);
                    }
                    Value::Undef => unreachable!(),
                }
            }
            start = end;
        }
        out
    }

    /// The first `bits` bits.
    pub fn prefix(&self, bits: u32, atoms: &mut AtomTable) -> PacketData {
        let mut out = PacketData::default();
        let mut start = 0;
        for c in &self.chunks {
            if start >= bits {
                break;
            }
            let take = c.width.min(bits - start);
            let lsb = c.width - take;
            match &c.value {
                Value::Concrete(b) => out.push(Value::Concrete(Bits::new(take, b.magnitude() >> lsb, false)), take),
                Value::Symbolic(s) => {
                    let atom = atoms.slice(s.atom, lsb, take);
                    out.push(Value::Symbolic(SymValue { atom, width: take, signed: false }), take);
                }
                Value::Undef => unreachable!(),
            }
            start += c.width;
        }
        out
    }

    /// Concrete bytes; a trailing partial byte is zero-padded. `None` if any
    /// bit is symbolic.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        if !self.is_concrete() {
            return None;
        }
        let len = self.len_bits();
        if len == 0 {
            return Some(Vec::new());
        }
        let Value::Concrete(b) = &self.chunks[0].value else { unreachable!() };
        let pad = (8 - len % 8) % 8;
        let total = ((len + pad) / 8) as usize;
        let v = b.magnitude() << pad;
        let mut out = vec![0u8; total];
        let raw = v.to_bytes_be();
        if v != BigUint::default() {
            out[total - raw.len()..].copy_from_slice(&raw);
        }
        Some(out)
    }
}

impl fmt::Display for PacketData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(bytes) = self.to_bytes() {
            return write!(f, "{}", hex::encode_upper(bytes));
        }
        let parts: Vec<String> = self
            .chunks
            .iter()
            .map(|c| match &c.value {
                Value::Concrete(b) => format!("{}:{}", c.width, b),
                other => format!("{}:{}", c.width, other),
            })
            .collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concrete_reads() {
        let d = PacketData::from_bytes(&[0xAB, 0xCD]);
        let mut atoms = AtomTable::default();
        assert_eq!(d.read(0, 8, &mut atoms).unwrap().to_u64(), Some(0xAB));
        assert_eq!(d.read(4, 8, &mut atoms).unwrap().to_u64(), Some(0xBC));
        assert_eq!(d.read(12, 8, &mut atoms), Err(ReadError::TooShort));
        assert_eq!(d.suffix(8, &mut atoms).to_bytes(), Some(vec![0xCD]));
        assert_eq!(d.prefix(8, &mut atoms).to_bytes(), Some(vec![0xAB]));
    }

    #[test]
    fn pushes_merge() {
        let mut d = PacketData::default();
        d.push(Value::unsigned(4, 0xA), 4);
        d.push(Value::unsigned(12, 0xBCD), 12);
        assert_eq!(d.chunks().len(), 1);
        assert_eq!(d.to_bytes(), Some(vec![0xAB, 0xCD]));
    }

    #[test]
    fn symbolic_reads() {
        let mut atoms = AtomTable::default();
        let a = atoms.fresh("x", 16);
        let mut d = PacketData::from_bytes(&[0x01]);
        d.push(Value::Symbolic(SymValue { atom: a, width: 16, signed: false }), 16);
        let Value::Symbolic(s) = d.read(8, 16, &mut atoms).unwrap() else { panic!() };
        assert_eq!(s.atom, a);
        let Value::Symbolic(s) = d.read(8, 4, &mut atoms).unwrap() else { panic!() };
        assert_eq!(atoms.root_of(s.atom), (a, 12));
        assert_eq!(d.read(4, 8, &mut atoms), Err(ReadError::Symbolic));
        assert!(d.to_bytes().is_none());
        assert_eq!(d.suffix(16, &mut atoms).len_bits(), 8);
    }
}
