//! Hash generators for field-list calculations and calculated fields.

use crc::{Crc, CRC_16_ARC, CRC_32_ISO_HDLC};
use num_bigint::BigUint;
use num_traits::Zero;

use crate::program_model::{Algorithm, FlItem, Program};
use crate::runtime_state::{Config, StuckReason};
use crate::values::{mask, Bits, Value};

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_ARC);
const CRC32: Crc<u32> = Crc::<u32>::new(&CRC_32_ISO_HDLC);

/// A bit string, most significant bit first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitString {
    pub bits: BigUint,
    pub len: u32,
}

impl BitString {
    pub fn push(&mut self, value: &BigUint, width: u32) {
        self.bits = (&self.bits << width) | (value & mask(width));
        self.len += width;
    }

    /// Bytes, with the final partial byte zero-padded on the right.
    pub fn to_bytes(&self) -> Vec<u8> {
        let pad = (8 - self.len % 8) % 8;
        let total = ((self.len + pad) / 8) as usize;
        let v = &self.bits << pad;
        let mut out = vec![0u8; total];
        if !v.is_zero() {
            let raw = v.to_bytes_be();
            out[total - raw.len()..].copy_from_slice(&raw);
        }
        out
    }
}

/// Ones-complement of the ones-complement sum of 16-bit words.
pub fn csum16(bytes: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    for pair in bytes.chunks(2) {
        let hi = u32::from(pair[0]);
        let lo = pair.get(1).copied().map(u32::from).unwrap_or(0);
        sum += (hi << 8) | lo;
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// CRC-16/ARC.
pub fn crc16(bytes: &[u8]) -> u16 {
    CRC16.checksum(bytes)
}

/// CRC-32 (ISO-HDLC).
pub fn crc32(bytes: &[u8]) -> u32 {
    CRC32.checksum(bytes)
}

/// Concatenates the list's values in order.
pub fn serialize_field_list(cfg: &Config, items: &[FlItem]) -> Result<BitString, StuckReason> {
    let program = cfg.program.clone();
    let mut out = BitString::default();
    for item in items {
        match item {
            FlItem::Const(b) => out.push(b.magnitude(), b.width()),
            FlItem::Field(inst, f) => {
                let h = &cfg.instances[*inst];
                if !h.valid {
                    return Err(StuckReason::ReadInvalidHeader);
                }
                let width = if program.field_info(*inst, *f).varbit { h.varbit_len } else { program.field_info(*inst, *f).width };
                match &h.fields[*f] {
                    Value::Concrete(b) => out.push(b.magnitude(), width),
                    Value::Undef => return Err(StuckReason::UndefInExpr),
                    Value::Symbolic(_) => return Err(StuckReason::SymbolicUnsupported),
                }
            }
        }
    }
    Ok(out)
}

/// Runs a generator and fits the result to `output_width`: narrower keeps the
/// low bits, wider zero-extends.
pub fn compute(algorithm: Algorithm, stream: &BitString, output_width: u32) -> Result<Bits, StuckReason> {
    let raw = match algorithm {
        Algorithm::Csum16 => BigUint::from(csum16(&stream.to_bytes())),
        Algorithm::Crc16 => BigUint::from(crc16(&stream.to_bytes())),
        Algorithm::Crc32 => BigUint::from(crc32(&stream.to_bytes())),
        Algorithm::Identity => {
            if stream.len != output_width {
                return Err(StuckReason::HashWidthMismatch);
            }
            stream.bits.clone()
        }
    };
    Ok(Bits::new(output_width.max(1), raw, false))
}

/// Evaluates a named field-list calculation.
pub fn calculate(cfg: &Config, program: &Program, name: &str) -> Result<Bits, StuckReason> {
    let calc = &program.calculations[name];
    let mut stream = BitString::default();
    for input in &calc.inputs {
        let items = program.flatten_field_list(input).unwrap_or(&[]);
        let part = serialize_field_list(cfg, items)?;
        stream.push(&part.bits, part.len);
    }
    compute(calc.algorithm, &stream, calc.output_width)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bitwise reference CRCs, reflected, straight from the polynomial.
    fn crc_reflected(bytes: &[u8], width: u32, poly_reflected: u64, init: u64, xorout: u64) -> u64 {
        let mut crc = init;
        for &b in bytes {
            crc ^= u64::from(b);
            for _ in 0..8 {
                crc = if crc & 1 == 1 { (crc >> 1) ^ poly_reflected } else { crc >> 1 };
            }
        }
        (crc ^ xorout) & ((1u64 << width) - 1)
    }

    fn reverse(v: u64, width: u32) -> u64 {
        (0..width).fold(0, |acc, i| acc | (((v >> i) & 1) << (width - 1 - i)))
    }

    // Arbitrary-precision ones-complement sum with end-around carry folded at
    // the very end.
    fn csum_oracle(bytes: &[u8]) -> u16 {
        let mut padded = bytes.to_vec();
        if padded.len() % 2 == 1 {
            padded.push(0);
        }
        let mut total = BigUint::zero();
        for w in padded.chunks(2) {
            total += BigUint::from(u32::from(w[0]) * 256 + u32::from(w[1]));
        }
        let m = BigUint::from(0xFFFFu32);
        while total > m {
            total = (&total & &m) + (&total >> 16u32);
        }
        let s: u32 = total.try_into().unwrap();
        !(s as u16)
    }

    #[test]
    fn check_values() {
        let s = b"123456789";
        assert_eq!(crc_reflected(s, 32, reverse(0x04C1_1DB7, 32), 0xFFFF_FFFF, 0xFFFF_FFFF), 0xCBF4_3926);
        assert_eq!(crc_reflected(s, 16, reverse(0x8005, 16), 0, 0), 0xBB3D);
        assert_eq!(u64::from(crc32(s)), crc_reflected(s, 32, reverse(0x04C1_1DB7, 32), 0xFFFF_FFFF, 0xFFFF_FFFF));
        assert_eq!(u64::from(crc16(s)), crc_reflected(s, 16, reverse(0x8005, 16), 0, 0));
    }

    #[test]
    fn csum16_examples() {
        assert_eq!(csum16(&[]), 0xFFFF);
        let rfc = [0x00, 0x01, 0xF2, 0x03, 0xF4, 0xF5, 0xF6, 0xF7];
        assert_eq!(csum_oracle(&rfc), 0x220D);
        assert_eq!(csum16(&rfc), 0x220D);
        assert_eq!(csum16(&[0xFF]), 0x00FF);
    }

    #[test]
    fn identity_and_widths() {
        let mut s = BitString::default();
        s.push(&BigUint::from(0xABu32), 8);
        assert_eq!(compute(Algorithm::Identity, &s, 8).unwrap().to_u64(), Some(0xAB));
        assert_eq!(compute(Algorithm::Identity, &s, 16), Err(StuckReason::HashWidthMismatch));
        // Narrow output keeps low bits.
        assert_eq!(compute(Algorithm::Crc16, &BitString::default(), 8).unwrap().width(), 8);
    }

    #[test]
    fn bit_string_pads_last_byte() {
        let mut s = BitString::default();
        s.push(&BigUint::from(0xCDu32), 8);
        s.push(&BigUint::from(0xABu32), 8);
        assert_eq!(s.to_bytes(), vec![0xCD, 0xAB]);
        let mut s = BitString::default();
        s.push(&BigUint::from(0b101u32), 3);
        assert_eq!(s.to_bytes(), vec![0b1010_0000]);
        assert_eq!(BitString::default().to_bytes(), Vec::<u8>::new());
    }

    proptest::proptest! {
        #[test]
        fn inserted_checksum_verifies(mut data in proptest::collection::vec(proptest::num::u8::ANY, 0..64)) {
            if data.len() % 2 == 1 { data.push(0); }
            let c = csum16(&data);
            data.extend_from_slice(&c.to_be_bytes());
            proptest::prop_assert_eq!(csum16(&data), 0);
            proptest::prop_assert_eq!(csum16(&data[..data.len() - 2]), csum_oracle(&data[..data.len() - 2]));
        }
    }
}
