//! Bit-precise values.
//!
//! Every runtime quantity is a [`Value`]: a fixed-width bit vector, the
//! distinguished undefined value, or a reference to a symbolic atom. All
//! arithmetic is performed on promoted operands and wraps at the result
//! width.

mod constraint;

pub use constraint::{
    constraint_sat, negate, AtomDef, AtomId, AtomOrigin, AtomTable, Constraint, Relation,
    SatResult, Witness,
};

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::frontend::{ConstExpr, SignMarker};

/// Failures of value-level operations. The interpreter maps these onto
/// stuck reasons.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("undefined value used in an expression")]
    UndefInExpr,
    #[error("shift by a negative amount")]
    NegativeShift,
    #[error("value {value} does not fit in {width} bits")]
    WidthOverflow { width: u32, value: BigUint },
    #[error("operation is not supported on symbolic values")]
    Symbolic,
}

/// `2^width - 1`.
pub fn mask(width: u32) -> BigUint {
    (BigUint::one() << width) - BigUint::one()
}

/// Number of significant bits; zero has bit length 0.
pub fn bit_length(n: &BigUint) -> u32 {
    n.bits() as u32
}

/// A concrete fixed-width bit vector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    width: u32,
    magnitude: BigUint,
    signed: bool,
}

impl Bits {
    /// Builds a vector from the low `width` bits of `magnitude`.
    pub fn new(width: u32, magnitude: impl Into<BigUint>, signed: bool) -> Self {
        assert!(width >= 1, "bit vectors have at least one bit");
        let magnitude = magnitude.into() & mask(width);
        Bits { width, magnitude, signed }
    }

    pub fn unsigned(width: u32, value: u64) -> Self {
        Bits::new(width, BigUint::from(value), false)
    }

    pub fn from_bool(b: bool) -> Self {
        Bits::unsigned(1, b as u64)
    }

    /// Two's-complement encoding of `value` at `width` bits.
    pub fn from_int(width: u32, value: &BigInt, signed: bool) -> Self {
        let modulus = BigInt::one() << width;
        let mut v = value % &modulus;
        if v.sign() == Sign::Minus {
            v += &modulus;
        }
        Bits::new(width, v.to_biguint().expect("non-negative"), signed)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn magnitude(&self) -> &BigUint {
        &self.magnitude
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude.is_zero()
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.magnitude.to_u64()
    }

    fn sign_bit(&self) -> bool {
        self.magnitude.bit(u64::from(self.width - 1))
    }

    /// Numeric value under this vector's own signedness.
    pub fn as_int(&self) -> BigInt {
        self.as_int_with(self.signed)
    }

    fn as_int_with(&self, signed: bool) -> BigInt {
        let m = BigInt::from(self.magnitude.clone());
        if signed && self.sign_bit() {
            m - (BigInt::one() << self.width)
        } else {
            m
        }
    }

    /// Widens (sign- or zero-extending by own signedness) or truncates.
    pub fn resize(&self, width: u32) -> Bits {
        if width <= self.width {
            Bits::new(width, self.magnitude.clone(), self.signed)
        } else {
            Bits::from_int(width, &self.as_int(), self.signed)
        }
    }

    pub fn with_signed(mut self, signed: bool) -> Bits {
        self.signed = signed;
        self
    }

    /// Big-endian byte encoding, padded to whole bytes on the left.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width.div_ceil(8) as usize;
        let raw = self.magnitude.to_bytes_be();
        let mut out = vec![0u8; n.saturating_sub(raw.len())];
        out.extend(raw.iter().skip(raw.len().saturating_sub(n)));
        out
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}w{:#x}", self.width, self.magnitude)?;
        if self.signed {
            write!(f, "s")?;
        }
        Ok(())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.magnitude)
    }
}

/// A symbolic value: an atom, zero-extended to `width` when the value is
/// wider than the atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymValue {
    pub atom: AtomId,
    pub width: u32,
    pub signed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Concrete(Bits),
    Undef,
    Symbolic(SymValue),
}

impl Value {
    pub fn unsigned(width: u32, v: u64) -> Value {
        Value::Concrete(Bits::unsigned(width, v))
    }

    pub fn zero(width: u32) -> Value {
        Value::unsigned(width, 0)
    }

    pub fn as_bits(&self) -> Option<&Bits> {
        match self {
            Value::Concrete(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_undef(&self) -> bool {
        matches!(self, Value::Undef)
    }

    pub fn width(&self) -> Option<u32> {
        match self {
            Value::Concrete(b) => Some(b.width()),
            Value::Symbolic(s) => Some(s.width),
            Value::Undef => None,
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.as_bits().and_then(Bits::to_u64)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Concrete(b) => write!(f, "{b}"),
            Value::Undef => write!(f, "@undef"),
            Value::Symbolic(s) => write!(f, "${}", s.atom.0),
        }
    }
}

impl From<Bits> for Value {
    fn from(b: Bits) -> Self {
        Value::Concrete(b)
    }
}

/// Width and encoding of a constant expression.
///
/// Plain values take the smallest width that holds them (one bit for zero).
/// Negative literals take one more bit and are encoded in two's complement.
/// A negated constant keeps the width of its operand and wraps.
pub fn infer_const_width(c: &ConstExpr) -> Result<Bits, ValueError> {
    let n = &c.value;
    let natural = bit_length(n).max(1);
    match (c.sign, c.width) {
        (SignMarker::Plain, Some(w)) => {
            if bit_length(n) > w {
                return Err(ValueError::WidthOverflow { width: w, value: n.clone() });
            }
            Ok(Bits::new(w, n.clone(), false))
        }
        (_, Some(w)) => {
            if bit_length(n) > w {
                return Err(ValueError::WidthOverflow { width: w, value: n.clone() });
            }
            Ok(Bits::from_int(w, &-BigInt::from(n.clone()), true))
        }
        (SignMarker::Plain, None) => Ok(Bits::new(natural, n.clone(), false)),
        (SignMarker::NegativeLiteral, None) => {
            let w = bit_length(n) + 1;
            Ok(Bits::from_int(w, &-BigInt::from(n.clone()), true))
        }
        (SignMarker::NegatedExpression, None) => {
            Ok(Bits::from_int(natural, &-BigInt::from(n.clone()), true))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub const ALL: [BinOp; 14] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

fn concrete(v: &Value) -> Result<&Bits, ValueError> {
    match v {
        Value::Concrete(b) => Ok(b),
        Value::Undef => Err(ValueError::UndefInExpr),
        Value::Symbolic(_) => Err(ValueError::Symbolic),
    }
}

/// Applies a binary operator.
///
/// Both operands are promoted to the wider width (each extended by its own
/// signedness); the result is signed if either operand is. Arithmetic wraps;
/// comparisons yield a one-bit value.
pub fn apply_binop(op: BinOp, a: &Value, b: &Value) -> Result<Value, ValueError> {
    if a.is_undef() || b.is_undef() {
        return Err(ValueError::UndefInExpr);
    }
    let (a, b) = (concrete(a)?, concrete(b)?);
    Ok(Value::Concrete(binop_bits(op, a, b)?))
}

pub fn binop_bits(op: BinOp, a: &Bits, b: &Bits) -> Result<Bits, ValueError> {
    let width = a.width.max(b.width);
    let signed = a.signed || b.signed;
    let x = a.resize(width);
    let y = b.resize(width);
    let xi = x.as_int_with(signed);
    let yi = y.as_int_with(signed);
    let out = match op {
        BinOp::Add => Bits::from_int(width, &(xi + yi), signed),
        BinOp::Sub => Bits::from_int(width, &(xi - yi), signed),
        BinOp::Mul => Bits::from_int(width, &(xi * yi), signed),
        BinOp::And => Bits::new(width, &x.magnitude & &y.magnitude, signed),
        BinOp::Or => Bits::new(width, &x.magnitude | &y.magnitude, signed),
        BinOp::Xor => Bits::new(width, &x.magnitude ^ &y.magnitude, signed),
        BinOp::Shl | BinOp::Shr => {
            let amount = b.as_int();
            if amount.sign() == Sign::Minus {
                return Err(ValueError::NegativeShift);
            }
            let amount = amount.to_u64().unwrap_or(u64::MAX).min(u64::from(width)) as u32;
            if op == BinOp::Shl {
                Bits::new(width, &x.magnitude << amount, signed)
            } else if signed {
                Bits::from_int(width, &(xi >> amount), signed)
            } else {
                Bits::new(width, &x.magnitude >> amount, signed)
            }
        }
        BinOp::Eq => Bits::from_bool(xi == yi),
        BinOp::Ne => Bits::from_bool(xi != yi),
        BinOp::Lt => Bits::from_bool(xi < yi),
        BinOp::Le => Bits::from_bool(xi <= yi),
        BinOp::Gt => Bits::from_bool(xi > yi),
        BinOp::Ge => Bits::from_bool(xi >= yi),
    };
    Ok(out)
}

pub fn apply_unop(op: UnOp, a: &Value) -> Result<Value, ValueError> {
    let a = concrete(a)?;
    Ok(Value::Concrete(match op {
        UnOp::Neg => Bits::from_int(a.width, &-a.as_int(), a.signed),
        UnOp::Not => Bits::new(a.width, &a.magnitude ^ mask(a.width), a.signed),
    }))
}

/// Keeps the low `width` bits. Symbolic values narrower than their atom
/// become a slice atom registered in `atoms`.
pub fn truncate_to_width(v: &Value, width: u32, atoms: &mut AtomTable) -> Result<Value, ValueError> {
    match v {
        Value::Undef => Err(ValueError::UndefInExpr),
        Value::Concrete(b) => Ok(Value::Concrete(Bits::new(width, b.magnitude.clone(), b.signed))),
        Value::Symbolic(s) => {
            let atom_width = atoms.width(s.atom);
            if width >= atom_width {
                Ok(Value::Symbolic(SymValue { atom: s.atom, width, signed: s.signed }))
            } else {
                let atom = atoms.slice(s.atom, 0, width);
                Ok(Value::Symbolic(SymValue { atom, width, signed: s.signed }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(v: u64, sign: SignMarker) -> ConstExpr {
        ConstExpr { value: BigUint::from(v), width: None, sign }
    }

    #[test]
    fn width_of_positive_constant() {
        let b = infer_const_width(&lit(5, SignMarker::Plain)).unwrap();
        assert_eq!((b.width(), b.to_u64()), (3, Some(0b101)));
    }

    #[test]
    fn width_of_negative_literal() {
        let b = infer_const_width(&lit(5, SignMarker::NegativeLiteral)).unwrap();
        assert_eq!((b.width(), b.to_u64()), (4, Some(0b1011)));
        assert!(b.signed());
    }

    #[test]
    fn width_of_negated_constant_keeps_operand_width() {
        let b = infer_const_width(&lit(5, SignMarker::NegatedExpression)).unwrap();
        assert_eq!((b.width(), b.to_u64()), (3, Some(0b011)));
    }

    #[test]
    fn zero_is_one_bit() {
        let b = infer_const_width(&lit(0, SignMarker::Plain)).unwrap();
        assert_eq!((b.width(), b.to_u64()), (1, Some(0)));
    }

    #[test]
    fn explicit_width_overflow() {
        let c = ConstExpr { value: BigUint::from(256u32), width: Some(8), sign: SignMarker::Plain };
        assert!(matches!(infer_const_width(&c), Err(ValueError::WidthOverflow { .. })));
        let c = ConstExpr { value: BigUint::from(255u32), width: Some(8), sign: SignMarker::Plain };
        assert_eq!(infer_const_width(&c).unwrap().width(), 8);
    }

    #[test]
    fn wrapping_add() {
        let r = apply_binop(BinOp::Add, &Value::unsigned(8, 0xFF), &Value::unsigned(8, 1)).unwrap();
        assert_eq!(r, Value::unsigned(8, 0));
    }

    #[test]
    fn mixed_sign_promotion() {
        let minus5 = infer_const_width(&lit(5, SignMarker::NegativeLiteral)).unwrap();
        let r = apply_binop(BinOp::Add, &Value::unsigned(3, 5), &Value::Concrete(minus5)).unwrap();
        let b = r.as_bits().unwrap();
        assert_eq!((b.width(), b.to_u64()), (4, Some(0)));
    }

    #[test]
    fn undef_operand_sticks() {
        assert_eq!(
            apply_binop(BinOp::And, &Value::Undef, &Value::unsigned(8, 1)),
            Err(ValueError::UndefInExpr)
        );
        assert_eq!(
            apply_binop(BinOp::Add, &Value::unsigned(8, 1), &Value::Undef),
            Err(ValueError::UndefInExpr)
        );
    }

    #[test]
    fn negative_shift_sticks() {
        let neg = Value::Concrete(Bits::from_int(4, &BigInt::from(-1), true));
        assert_eq!(
            apply_binop(BinOp::Shl, &Value::unsigned(8, 1), &neg),
            Err(ValueError::NegativeShift)
        );
    }

    #[test]
    fn arithmetic_right_shift_on_signed() {
        let v = Value::Concrete(Bits::from_int(8, &BigInt::from(-8), true));
        let r = apply_binop(BinOp::Shr, &v, &Value::unsigned(2, 2)).unwrap();
        assert_eq!(r.as_bits().unwrap().as_int(), BigInt::from(-2));
        let r = apply_binop(BinOp::Shr, &Value::unsigned(8, 0xF8), &Value::unsigned(2, 2)).unwrap();
        assert_eq!(r.to_u64(), Some(0x3E));
    }

    #[test]
    fn truncation() {
        let mut atoms = AtomTable::default();
        let t = truncate_to_width(&Value::unsigned(9, 0x1FF), 8, &mut atoms).unwrap();
        assert_eq!(t, Value::unsigned(8, 0xFF));
        let t = truncate_to_width(&Value::unsigned(8, 0x42), 8, &mut atoms).unwrap();
        assert_eq!(t, Value::unsigned(8, 0x42));
        assert_eq!(truncate_to_width(&Value::Undef, 8, &mut atoms), Err(ValueError::UndefInExpr));
    }

    #[test]
    fn symbolic_truncation_derives_slice_atom() {
        let mut atoms = AtomTable::default();
        let root = atoms.fresh("x", 16);
        let v = Value::Symbolic(SymValue { atom: root, width: 16, signed: false });
        let Value::Symbolic(t) = truncate_to_width(&v, 8, &mut atoms).unwrap() else {
            panic!("expected symbolic");
        };
        assert_ne!(t.atom, root);
        assert_eq!(atoms.get(t.atom).origin, AtomOrigin::Slice { root, lsb: 0 });
        assert_eq!(atoms.width(t.atom), 8);
    }

    #[test]
    fn to_bytes_pads() {
        assert_eq!(Bits::unsigned(16, 0x0800).to_bytes(), vec![0x08, 0x00]);
        assert_eq!(Bits::unsigned(9, 1).to_bytes(), vec![0x00, 0x01]);
    }
}
