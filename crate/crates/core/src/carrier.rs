//! Numeric carriers shared by every IR: exact rationals, IEEE binary64 and
//! symbolic S-expressions for the value type; unbounded and 64-bit naturals
//! for the index type.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::analysis::SExpr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CarrierError {
    #[error("carrier kind mismatch: {0} vs {1}")]
    KindMismatch(CarrierKind, CarrierKind),
    #[error("{0} is a unary operation")]
    Arity(CtOp),
    #[error("natural {0} does not fit in 64 bits")]
    Range(BigUint),
    #[error("cannot parse carrier literal `{0}`")]
    Parse(String),
    #[error("NaN is not a valid carrier value")]
    NaN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CarrierKind {
    Rational,
    Binary64,
    Symbolic,
}

impl fmt::Display for CarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CarrierKind::Rational => "rational",
            CarrierKind::Binary64 => "binary64",
            CarrierKind::Symbolic => "symbolic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CtOp {
    Plus,
    Sub,
    Mult,
    Min,
    Max,
    Abs,
    Zless,
}

impl CtOp {
    pub fn name(self) -> &'static str {
        match self {
            CtOp::Plus => "plus",
            CtOp::Sub => "sub",
            CtOp::Mult => "mult",
            CtOp::Min => "min",
            CtOp::Max => "max",
            CtOp::Abs => "abs",
            CtOp::Zless => "zless",
        }
    }
}

impl fmt::Display for CtOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum CarrierValue {
    Rational(BigRational),
    Binary64(f64),
    Symbolic(Arc<SExpr>),
}

impl CarrierValue {
    pub fn kind(&self) -> CarrierKind {
        match self {
            CarrierValue::Rational(_) => CarrierKind::Rational,
            CarrierValue::Binary64(_) => CarrierKind::Binary64,
            CarrierValue::Symbolic(_) => CarrierKind::Symbolic,
        }
    }

    pub fn zero(kind: CarrierKind) -> Self {
        match kind {
            CarrierKind::Rational => CarrierValue::Rational(BigRational::zero()),
            CarrierKind::Binary64 => CarrierValue::Binary64(0.0),
            CarrierKind::Symbolic => CarrierValue::Symbolic(Arc::new(SExpr::ConstZero)),
        }
    }

    pub fn one(kind: CarrierKind) -> Self {
        match kind {
            CarrierKind::Rational => CarrierValue::Rational(BigRational::one()),
            CarrierKind::Binary64 => CarrierValue::Binary64(1.0),
            CarrierKind::Symbolic => CarrierValue::Symbolic(Arc::new(SExpr::ConstOne)),
        }
    }

    pub fn rat(n: i64, d: i64) -> Self {
        CarrierValue::Rational(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn int(n: i64) -> Self {
        CarrierValue::Rational(BigRational::from_integer(BigInt::from(n)))
    }

    /// Rational carrier holding exactly the value of a finite double.
    pub fn exact_of_f64(x: f64) -> Result<Self, CarrierError> {
        f64_to_rational(x).map(CarrierValue::Rational)
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            CarrierValue::Rational(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CarrierValue::Binary64(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CarrierValue::Rational(r) => r.is_zero(),
            CarrierValue::Binary64(x) => *x == 0.0,
            CarrierValue::Symbolic(s) => matches!(**s, SExpr::ConstZero),
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            CarrierValue::Rational(r) => r.is_one(),
            CarrierValue::Binary64(x) => *x == 1.0,
            CarrierValue::Symbolic(s) => matches!(**s, SExpr::ConstOne),
        }
    }

    /// Ordering under the carrier's own order; symbolic values are unordered.
    pub fn partial_cmp_value(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (CarrierValue::Rational(a), CarrierValue::Rational(b)) => Some(a.cmp(b)),
            (CarrierValue::Binary64(a), CarrierValue::Binary64(b)) => a.partial_cmp(b),
            _ => None,
        }
    }

    pub fn plus(&self, b: &Self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Plus, self, Some(b))
    }
    pub fn sub(&self, b: &Self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Sub, self, Some(b))
    }
    pub fn mult(&self, b: &Self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Mult, self, Some(b))
    }
    pub fn min(&self, b: &Self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Min, self, Some(b))
    }
    pub fn max(&self, b: &Self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Max, self, Some(b))
    }
    pub fn zless(&self, b: &Self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Zless, self, Some(b))
    }
    pub fn abs(&self) -> Result<Self, CarrierError> {
        ct_arith(CtOp::Abs, self, None)
    }
}

/// Value equality. Rationals compare by value, doubles with IEEE `==`,
/// symbolic values structurally.
impl PartialEq for CarrierValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (CarrierValue::Rational(a), CarrierValue::Rational(b)) => a == b,
            (CarrierValue::Binary64(a), CarrierValue::Binary64(b)) => a == b,
            (CarrierValue::Symbolic(a), CarrierValue::Symbolic(b)) => a == b,
            _ => false,
        }
    }
}

pub fn ct_arith(
    op: CtOp,
    a: &CarrierValue,
    b: Option<&CarrierValue>,
) -> Result<CarrierValue, CarrierError> {
    use CarrierValue::*;
    if op == CtOp::Abs {
        return Ok(match a {
            Rational(x) => Rational(x.abs()),
            Binary64(x) => Binary64(x.abs()),
            Symbolic(s) => Symbolic(Arc::new(SExpr::Abs(s.clone()))),
        });
    }
    let b = b.ok_or(CarrierError::Arity(op))?;
    match (a, b) {
        (Rational(x), Rational(y)) => Ok(Rational(match op {
            CtOp::Plus => x + y,
            CtOp::Sub => x - y,
            CtOp::Mult => x * y,
            CtOp::Min => {
                if x < y {
                    x.clone()
                } else {
                    y.clone()
                }
            }
            CtOp::Max => {
                if x < y {
                    y.clone()
                } else {
                    x.clone()
                }
            }
            CtOp::Zless => {
                if x < y {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }
            CtOp::Abs => unreachable!(),
        })),
        (Binary64(x), Binary64(y)) => Ok(Binary64(f64_op(op, *x, *y))),
        (Symbolic(x), Symbolic(y)) => {
            let (x, y) = (x.clone(), y.clone());
            Ok(Symbolic(Arc::new(match op {
                CtOp::Plus => SExpr::Plus(x, y),
                CtOp::Sub => SExpr::Sub(x, y),
                CtOp::Mult => SExpr::Mult(x, y),
                CtOp::Min => SExpr::Min(x, y),
                CtOp::Max => SExpr::Max(x, y),
                CtOp::Zless => SExpr::ZLess(x, y),
                CtOp::Abs => unreachable!(),
            })))
        }
        _ => Err(CarrierError::KindMismatch(a.kind(), b.kind())),
    }
}

/// Binary64 semantics of each operation. The generated LLVM code uses the
/// same select-based definitions for min, max and zless.
pub fn f64_op(op: CtOp, x: f64, y: f64) -> f64 {
    match op {
        CtOp::Plus => x + y,
        CtOp::Sub => x - y,
        CtOp::Mult => x * y,
        CtOp::Min => {
            if x < y {
                x
            } else {
                y
            }
        }
        CtOp::Max => {
            if x < y {
                y
            } else {
                x
            }
        }
        CtOp::Zless => {
            if x < y {
                1.0
            } else {
                0.0
            }
        }
        CtOp::Abs => x.abs(),
    }
}

pub fn f64_to_rational(x: f64) -> Result<BigRational, CarrierError> {
    if !x.is_finite() {
        return Err(CarrierError::NaN);
    }
    BigRational::from_float(x).ok_or(CarrierError::NaN)
}

/// Round a rational to the nearest double, ties to even.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let neg = r.is_negative();
    let num = r.numer().abs().to_biguint().unwrap();
    let den = r.denom().abs().to_biguint().unwrap();
    // Find e with 2^52 <= num * 2^-e / den < 2^53.
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    let mut e = nb - db - 52;
    let scaled = |e: i64| -> (BigUint, BigUint) {
        if e >= 0 {
            (num.clone(), den.clone() << (e as usize))
        } else {
            (num.clone() << ((-e) as usize), den.clone())
        }
    };
    let (mut n2, mut d2) = scaled(e);
    let two53 = BigUint::one() << 53usize;
    let two52 = BigUint::one() << 52usize;
    loop {
        let q = &n2 / &d2;
        if q >= two53 {
            e += 1;
        } else if q < two52 {
            e -= 1;
        } else {
            break;
        }
        let s = scaled(e);
        n2 = s.0;
        d2 = s.1;
    }
    // Subnormal range: the exponent of the lsb may not go below -1074.
    if e < -1074 {
        e = -1074;
        let s = scaled(e);
        n2 = s.0;
        d2 = s.1;
    }
    let q = &n2 / &d2;
    let rem = &n2 - &q * &d2;
    let twice = rem << 1usize;
    let mut m = q;
    match twice.cmp(&d2) {
        Ordering::Greater => m += 1u32,
        Ordering::Equal => {
            if (&m & BigUint::one()) == BigUint::one() {
                m += 1u32
            }
        }
        Ordering::Less => {}
    }
    let mf = m.to_f64().unwrap();
    let v = if e > 971 { f64::INFINITY } else { mf * pow2(e) };
    if neg {
        -v
    } else {
        v
    }
}

fn pow2(e: i64) -> f64 {
    // Split to avoid intermediate overflow or underflow of 2^e itself.
    if e < -1000 {
        2f64.powi(-1000) * 2f64.powi((e + 1000) as i32)
    } else if e > 1000 {
        2f64.powi(1000) * 2f64.powi((e - 1000) as i32)
    } else {
        2f64.powi(e as i32)
    }
}

/// Hexadecimal float literal with an exact round trip, e.g. `0x1.8p1`.
pub fn format_hex_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 && frac == 0 {
        return format!("{sign}0x0p0");
    }
    let (lead, e) = if exp == 0 {
        (0, -1022)
    } else {
        (1, exp - 1023)
    };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    if digits.is_empty() {
        format!("{sign}0x{lead}p{e}")
    } else {
        format!("{sign}0x{lead}.{digits}p{e}")
    }
}

pub fn parse_hex_f64(s: &str) -> Option<f64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))?;
    let (mant, exp) = body.split_once(['p', 'P'])?;
    let exp: i64 = exp.parse().ok()?;
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let mut num = BigUint::zero();
    for c in int.chars().chain(frac.chars()) {
        num = num * 16u32 + c.to_digit(16)?;
    }
    let e2 = exp - 4 * frac.len() as i64;
    let r = if e2 >= 0 {
        BigRational::from_integer(BigInt::from_biguint(Sign::Plus, num << (e2 as usize)))
    } else {
        BigRational::new(
            BigInt::from_biguint(Sign::Plus, num),
            BigInt::from_biguint(Sign::Plus, BigUint::one() << ((-e2) as usize)),
        )
    };
    let v = rational_to_f64(&r);
    Some(if neg { -v } else { v })
}

fn parse_rational(s: &str) -> Option<BigRational> {
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p).ok()?;
        let q = BigInt::from_str(q).ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Ok(n) = BigInt::from_str(s) {
        return Some(BigRational::from_integer(n));
    }
    // Finite decimal literal such as 12.15 or 1e-3, read exactly.
    let (mant, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = mant.split_once('.')?;
    let neg = int.starts_with('-');
    let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
    let n = BigInt::from_str(&digits).ok()?;
    let scale = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

/// Literal syntax: rationals as `p/q`, integers or exact decimals; doubles
/// as hex floats (`0x1.8p1`) or decimals suffixed with `d` (`0.1d`).
impl FromStr for CarrierValue {
    type Err = CarrierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.contains("0x") || t.contains("0X") {
            return parse_hex_f64(t)
                .map(CarrierValue::Binary64)
                .ok_or_else(|| CarrierError::Parse(s.into()));
        }
        if let Some(d) = t.strip_suffix('d') {
            return d
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(CarrierValue::Binary64)
                .ok_or_else(|| CarrierError::Parse(s.into()));
        }
        parse_rational(t)
            .map(CarrierValue::Rational)
            .ok_or_else(|| CarrierError::Parse(s.into()))
    }
}

impl fmt::Display for CarrierValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CarrierValue::Rational(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            CarrierValue::Binary64(x) => f.write_str(&format_hex_f64(*x)),
            CarrierValue::Symbolic(s) => write!(f, "{s}"),
        }
    }
}

impl Serialize for CarrierValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CarrierValue::Symbolic(e) => e.serialize(s),
            _ => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for CarrierValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NatKind {
    BigNat,
    U64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NatValue {
    BigNat(BigUint),
    U64(u64),
}

pub fn nat_from_usize(n: &BigUint, kind: NatKind) -> Result<NatValue, CarrierError> {
    match kind {
        NatKind::BigNat => Ok(NatValue::BigNat(n.clone())),
        NatKind::U64 => n
            .to_u64()
            .map(NatValue::U64)
            .ok_or_else(|| CarrierError::Range(n.clone())),
    }
}

impl NatValue {
    pub fn kind(&self) -> NatKind {
        match self {
            NatValue::BigNat(_) => NatKind::BigNat,
            NatValue::U64(_) => NatKind::U64,
        }
    }

    pub fn big(n: u64) -> Self {
        NatValue::BigNat(BigUint::from(n))
    }

    pub fn of_kind(kind: NatKind, n: u64) -> Self {
        match kind {
            NatKind::BigNat => NatValue::BigNat(BigUint::from(n)),
            NatKind::U64 => NatValue::U64(n),
        }
    }

    pub fn to_nat(&self) -> BigUint {
        match self {
            NatValue::BigNat(n) => n.clone(),
            NatValue::U64(n) => BigUint::from(*n),
        }
    }

    /// Value as a host index when it fits.
    pub fn to_usize(&self) -> Option<usize> {
        match self {
            NatValue::BigNat(n) => n.to_usize(),
            NatValue::U64(n) => usize::try_from(*n).ok(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            NatValue::BigNat(n) => n.is_zero(),
            NatValue::U64(n) => *n == 0,
        }
    }
}

impl fmt::Display for NatValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NatValue::BigNat(n) => write!(f, "{n}"),
            NatValue::U64(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for NatValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NatValue::U64(n) => s.serialize_u64(*n),
            NatValue::BigNat(n) => s.serialize_str(&n.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for NatValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(NatValue::U64)
                .ok_or_else(|| serde::de::Error::custom("expected natural")),
            serde_json::Value::String(s) => BigUint::from_str(&s)
                .map(NatValue::BigNat)
                .map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("expected natural")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_ops() {
        let a = CarrierValue::rat(1, 3);
        let b = CarrierValue::rat(1, 6);
        assert_eq!(a.plus(&b).unwrap(), CarrierValue::rat(1, 2));
        assert_eq!(a.zless(&b).unwrap(), CarrierValue::int(0));
        assert_eq!(b.zless(&a).unwrap(), CarrierValue::int(1));
    }

    #[test]
    fn binary64_is_not_exact() {
        let s = CarrierValue::Binary64(0.1)
            .plus(&CarrierValue::Binary64(0.2))
            .unwrap();
        assert_ne!(s, CarrierValue::Binary64(0.3));
        let z = CarrierValue::Binary64(2.0)
            .zless(&CarrierValue::Binary64(3.0))
            .unwrap();
        assert_eq!(z, CarrierValue::Binary64(1.0));
    }

    #[test]
    fn kind_mismatch() {
        let e = CarrierValue::int(1).plus(&CarrierValue::Binary64(1.0));
        assert!(matches!(e, Err(CarrierError::KindMismatch(..))));
    }

    #[test]
    fn nat_conversion() {
        assert_eq!(
            nat_from_usize(&BigUint::from(0u32), NatKind::U64).unwrap(),
            NatValue::U64(0)
        );
        assert_eq!(
            nat_from_usize(&BigUint::from(5u32), NatKind::BigNat).unwrap(),
            NatValue::big(5)
        );
        let big = BigUint::one() << 64usize;
        assert!(nat_from_usize(&big, NatKind::U64).is_err());
        assert!(nat_from_usize(&(big - 1u32), NatKind::U64).is_ok());
    }

    #[test]
    fn hex_round_trip() {
        for x in [
            0.0,
            -0.0,
            1.0,
            3.0,
            0.1,
            -2.5e-300,
            5e-324,
            f64::MAX,
            1.0 / 3.0,
        ] {
            let s = format_hex_f64(x);
            assert_eq!(parse_hex_f64(&s).unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_hex_f64(3.0), "0x1.8p1");
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(
            "1/3".parse::<CarrierValue>().unwrap(),
            CarrierValue::rat(1, 3)
        );
        assert_eq!(
            "12.15".parse::<CarrierValue>().unwrap(),
            CarrierValue::rat(243, 20)
        );
        assert_eq!(
            "0x1.8p1".parse::<CarrierValue>().unwrap(),
            CarrierValue::Binary64(3.0)
        );
        assert_eq!(
            "0.1d".parse::<CarrierValue>().unwrap(),
            CarrierValue::Binary64(0.1)
        );
    }

    #[test]
    fn nearest_double() {
        for x in [0.1, 1e-310, 123456.789, -7.0, 2f64.powi(-1074)] {
            let r = f64_to_rational(x).unwrap();
            assert_eq!(rational_to_f64(&r).to_bits(), x.to_bits());
        }
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert_eq!(rational_to_f64(&third), 1.0 / 3.0);
        let r = BigRational::new(BigInt::from(3), BigInt::from(10));
        assert_eq!(rational_to_f64(&r), 0.3);
    }
}
