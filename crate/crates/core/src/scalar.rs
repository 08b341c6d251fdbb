//! Scalar arithmetic backends.
//!
//! Three backends sit behind one [`Scalar`] interface:
//!
//! * `Rational` — arbitrary-precision rationals, always reduced, positive
//!   denominator.
//! * `Quadratic` — elements `a + b*sqrt(d)` of a real quadratic field, `a`,
//!   `b` rational and `d` a fixed square-free integer `>= 2`. Comparisons are
//!   exact (sign determination by conjugate squaring, never by floating
//!   point).
//! * `Float` — a binary float with an explicit mantissa precision in bits.
//!   A float value stands for "the real it rounds to, up to one unit in the
//!   last place"; comparisons return an ordering only when the two
//!   one-ulp windows are disjoint, otherwise [`ArithError::Undecidable`].
//!
//! Every operation is checked: backends never mix silently, and precision
//! never silently decreases (binary operations promote to the larger
//! precision of the operands).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Identifies which backend a [`Scalar`] lives in, including the field
/// discriminant for quadratic values and the precision for floats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Rational,
    Quadratic { d: u64 },
    Float { bits: u32 },
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Rational => write!(f, "rational"),
            Backend::Quadratic { d } => write!(f, "quad:{d}"),
            Backend::Float { bits } => write!(f, "float:{bits}"),
        }
    }
}

impl FromStr for Backend {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        let s = s.trim();
        if s == "rational" {
            return Ok(Backend::Rational);
        }
        if let Some(d) = s.strip_prefix("quad:") {
            let d: u64 = d.parse().map_err(|_| ParseError::bad(s))?;
            return Ok(Backend::Quadratic { d });
        }
        if let Some(bits) = s.strip_prefix("float:") {
            let bits: u32 = bits.parse().map_err(|_| ParseError::bad(s))?;
            return Ok(Backend::Float { bits });
        }
        Err(ParseError::bad(s))
    }
}

impl Serialize for Backend {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Backend {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("mixed scalar backends: {left} vs {right}")]
    MixedField { left: Backend, right: Backend },
    #[error("comparison undecidable at {bits} mantissa bits")]
    Undecidable { bits: u32 },
    #[error("invalid quadratic field discriminant {d}: {reason}")]
    InvalidField { d: u64, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("cannot parse scalar from {0:?}")]
    BadScalar(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

impl ParseError {
    fn bad(s: &str) -> Self {
        ParseError::BadScalar(s.to_owned())
    }
}

/// `true` iff `d` has no repeated prime factor. `0` and `1` are rejected by
/// [`Quad::new`] separately.
pub fn is_square_free(d: u64) -> bool {
    let mut d = d;
    let mut p = 2u64;
    while p.checked_mul(p).map_or(false, |pp| pp <= d) {
        if d % p == 0 {
            d /= p;
            if d % p == 0 {
                return false;
            }
        }
        p += 1;
    }
    true
}

// ---------------------------------------------------------------------------
// Quadratic field elements
// ---------------------------------------------------------------------------

/// `a + b*sqrt(d)` with rational `a`, `b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Quad {
    pub a: BigRational,
    pub b: BigRational,
    pub d: u64,
}

impl Quad {
    pub fn new(a: BigRational, b: BigRational, d: u64) -> Result<Quad, ArithError> {
        if d < 2 {
            return Err(ArithError::InvalidField {
                d,
                reason: "need d >= 2",
            });
        }
        if !is_square_free(d) {
            return Err(ArithError::InvalidField {
                d,
                reason: "not square-free",
            });
        }
        Ok(Quad { a, b, d })
    }

    fn same_field(&self, rhs: &Quad) -> Result<(), ArithError> {
        if self.d == rhs.d {
            Ok(())
        } else {
            Err(ArithError::MixedField {
                left: Backend::Quadratic { d: self.d },
                right: Backend::Quadratic { d: rhs.d },
            })
        }
    }

    fn add(&self, rhs: &Quad) -> Result<Quad, ArithError> {
        self.same_field(rhs)?;
        Ok(Quad {
            a: &self.a + &rhs.a,
            b: &self.b + &rhs.b,
            d: self.d,
        })
    }

    fn mul(&self, rhs: &Quad) -> Result<Quad, ArithError> {
        self.same_field(rhs)?;
        let d = BigRational::from_integer(BigInt::from(self.d));
        Ok(Quad {
            a: &self.a * &rhs.a + &d * &self.b * &rhs.b,
            b: &self.a * &rhs.b + &self.b * &rhs.a,
            d: self.d,
        })
    }

    fn neg(&self) -> Quad {
        Quad {
            a: -&self.a,
            b: -&self.b,
            d: self.d,
        }
    }

    fn inv(&self) -> Result<Quad, ArithError> {
        // 1/(a+b*sqrt(d)) = (a-b*sqrt(d)) / (a^2 - d*b^2); the norm vanishes
        // only at zero because d is not a square.
        let d = BigRational::from_integer(BigInt::from(self.d));
        let norm = &self.a * &self.a - &d * &self.b * &self.b;
        if norm.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        Ok(Quad {
            a: &self.a / &norm,
            b: -&self.b / &norm,
            d: self.d,
        })
    }

    /// Exact sign: -1, 0, or 1.
    pub fn signum(&self) -> i8 {
        let sa = rat_sign(&self.a);
        let sb = rat_sign(&self.b);
        match (sa, sb) {
            (0, 0) => 0,
            (s, 0) => s,
            (0, s) => s,
            (1, 1) => 1,
            (-1, -1) => -1,
            _ => {
                // Opposite signs: |a| vs |b|*sqrt(d) decided by squaring.
                let d = BigRational::from_integer(BigInt::from(self.d));
                let lhs = &self.a * &self.a;
                let rhs = &d * &self.b * &self.b;
                match lhs.cmp(&rhs) {
                    Ordering::Equal => 0,
                    Ordering::Greater => sa,
                    Ordering::Less => sb,
                }
            }
        }
    }

    pub fn to_f64(&self) -> f64 {
        rat_to_f64(&self.a) + rat_to_f64(&self.b) * (self.d as f64).sqrt()
    }
}

fn rat_sign(r: &BigRational) -> i8 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Fixed-precision binary floats
// ---------------------------------------------------------------------------

/// `mantissa * 2^exp` with `|mantissa|` normalized into
/// `[2^(prec-1), 2^prec)` (or zero). Rounding is to nearest, ties to even.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exp: i64,
    prec: u32,
}

/// Exponent gaps beyond `4*prec + 64` bits are folded into a sticky bit
/// instead of materializing the full alignment shift.
fn align_cap(prec: u32) -> i64 {
    4 * prec as i64 + 64
}

impl Dyadic {
    pub fn zero(prec: u32) -> Dyadic {
        Dyadic {
            mantissa: BigInt::zero(),
            exp: 0,
            prec: prec.max(MIN_FLOAT_BITS),
        }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn signum(&self) -> i8 {
        match self.mantissa.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    /// Round `m * 2^e` to `prec` mantissa bits.
    pub fn normalize(m: BigInt, e: i64, prec: u32) -> Dyadic {
        let prec = prec.max(MIN_FLOAT_BITS);
        if m.is_zero() {
            return Dyadic::zero(prec);
        }
        let bits = m.magnitude().bits() as i64;
        let shift = bits - prec as i64;
        if shift > 0 {
            let (mut q, carry_exp) = round_shift_right(&m, shift as u64, prec);
            let e = e + shift + carry_exp;
            if q.is_zero() {
                // Cannot happen for bits > prec, but keep the invariant.
                return Dyadic::zero(prec);
            }
            debug_assert_eq!(q.magnitude().bits(), prec as u64);
            let d = Dyadic {
                mantissa: std::mem::take(&mut q),
                exp: e,
                prec,
            };
            d
        } else if shift < 0 {
            Dyadic {
                mantissa: m << (-shift) as u64,
                exp: e + shift,
                prec,
            }
        } else {
            Dyadic {
                mantissa: m,
                exp: e,
                prec,
            }
        }
    }

    fn promote_prec(&self, rhs: &Dyadic) -> u32 {
        self.prec.max(rhs.prec)
    }

    pub fn add(&self, rhs: &Dyadic) -> Dyadic {
        let prec = self.promote_prec(rhs);
        if self.is_zero() {
            return Dyadic::normalize(rhs.mantissa.clone(), rhs.exp, prec);
        }
        if rhs.is_zero() {
            return Dyadic::normalize(self.mantissa.clone(), self.exp, prec);
        }
        let (hi, lo) = if self.exp >= rhs.exp {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let diff = hi.exp - lo.exp;
        if diff > align_cap(prec) {
            // The small operand is far below one ulp of the large one: fold
            // it into a sticky bit two guard positions down.
            let m = (&hi.mantissa << 2u32) + BigInt::from(lo.signum());
            Dyadic::normalize(m, hi.exp - 2, prec)
        } else {
            let m = (&hi.mantissa << diff as u64) + &lo.mantissa;
            Dyadic::normalize(m, lo.exp, prec)
        }
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic {
            mantissa: -&self.mantissa,
            exp: self.exp,
            prec: self.prec,
        }
    }

    pub fn sub(&self, rhs: &Dyadic) -> Dyadic {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Dyadic) -> Dyadic {
        let prec = self.promote_prec(rhs);
        Dyadic::normalize(&self.mantissa * &rhs.mantissa, self.exp + rhs.exp, prec)
    }

    pub fn div(&self, rhs: &Dyadic) -> Result<Dyadic, ArithError> {
        if rhs.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        let prec = self.promote_prec(rhs);
        if self.is_zero() {
            return Ok(Dyadic::zero(prec));
        }
        Ok(Dyadic::from_big_ratio(
            &self.mantissa,
            &rhs.mantissa,
            self.exp - rhs.exp,
            prec,
        ))
    }

    /// Round `num/den * 2^e` to `prec` bits. `den` must be nonzero.
    fn from_big_ratio(num: &BigInt, den: &BigInt, e: i64, prec: u32) -> Dyadic {
        use num_integer::Integer;
        if num.is_zero() {
            return Dyadic::zero(prec);
        }
        let nbits = num.magnitude().bits() as i64;
        let dbits = den.magnitude().bits() as i64;
        // Guarantee a quotient of at least prec+3 bits so the sticky bit sits
        // below the rounding position.
        let s = (prec as i64 + 3 + (dbits - nbits).max(0) + 1) as u64;
        let (q, r) = (num << s).div_rem(den);
        let mut q = q;
        if !r.is_zero() {
            // Sticky: make sure the discarded tail is recorded so half-even
            // rounding cannot treat an inexact value as an exact tie.
            q |= BigInt::one();
        }
        Dyadic::normalize(q, e - s as i64, prec)
    }

    pub fn from_rational(r: &BigRational, prec: u32) -> Dyadic {
        Dyadic::from_big_ratio(r.numer(), r.denom(), 0, prec)
    }

    /// Exact value as a rational; dyadic floats are rationals with a power of
    /// two denominator.
    pub fn to_rational(&self) -> BigRational {
        if self.exp >= 0 {
            BigRational::from_integer(&self.mantissa << self.exp as u64)
        } else {
            BigRational::new(
                self.mantissa.clone(),
                BigInt::one() << (-self.exp) as u64,
            )
        }
    }

    /// Compare by represented value, exactly.
    pub fn cmp_exact(&self, rhs: &Dyadic) -> Ordering {
        let ls = self.signum();
        let rs = rhs.signum();
        if ls != rs {
            return ls.cmp(&rs);
        }
        if ls == 0 {
            return Ordering::Equal;
        }
        // Same nonzero sign: compare highest-bit positions first.
        let lmsb = self.exp + self.mantissa.magnitude().bits() as i64;
        let rmsb = rhs.exp + rhs.mantissa.magnitude().bits() as i64;
        if lmsb != rmsb {
            let mag = lmsb.cmp(&rmsb);
            return if ls > 0 { mag } else { mag.reverse() };
        }
        let e = self.exp.min(rhs.exp);
        let a = &self.mantissa << (self.exp - e) as u64;
        let b = &rhs.mantissa << (rhs.exp - e) as u64;
        a.cmp(&b)
    }

    /// Compare as one-ulp windows. Equal is only certified for two exact
    /// zeros; any overlap is undecidable at the current precision.
    pub fn cmp_fuzzy(&self, rhs: &Dyadic) -> Result<Ordering, ArithError> {
        let bits = self.promote_prec(rhs);
        match (self.is_zero(), rhs.is_zero()) {
            (true, true) => return Ok(Ordering::Equal),
            // A normalized nonzero value is at least 2^(prec-1) ulps from
            // zero, so its sign is certain.
            (true, false) => {
                return Ok(if rhs.signum() > 0 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                })
            }
            (false, true) => {
                return Ok(if self.signum() > 0 {
                    Ordering::Greater
                } else {
                    Ordering::Less
                })
            }
            (false, false) => {}
        }
        if self.signum() != rhs.signum() {
            return Ok(self.signum().cmp(&rhs.signum()));
        }
        let lmsb = self.exp + self.mantissa.magnitude().bits() as i64;
        let rmsb = rhs.exp + rhs.mantissa.magnitude().bits() as i64;
        if (lmsb - rmsb).unsigned_abs() > bits as u64 + 2 {
            // Magnitudes differ by more than the ulp windows can bridge.
            let mag = lmsb.cmp(&rmsb);
            return Ok(if self.signum() > 0 { mag } else { mag.reverse() });
        }
        let e = self.exp.min(rhs.exp);
        let a = &self.mantissa << (self.exp - e) as u64;
        let b = &rhs.mantissa << (rhs.exp - e) as u64;
        let diff: BigInt = &a - &b;
        let threshold: BigInt = (BigInt::one() << (self.exp - e) as u64)
            + (BigInt::one() << (rhs.exp - e) as u64);
        if diff.magnitude() > threshold.magnitude() {
            Ok(if diff.is_positive() {
                Ordering::Greater
            } else {
                Ordering::Less
            })
        } else {
            Err(ArithError::Undecidable { bits })
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mantissa.magnitude().bits();
        let (top, e) = if bits > 53 {
            let drop = bits - 53;
            ((&self.mantissa >> drop), self.exp + drop as i64)
        } else {
            (self.mantissa.clone(), self.exp)
        };
        let t = top.to_f64().unwrap_or(f64::NAN);
        if e > i32::MAX as i64 || e < i32::MIN as i64 {
            return if e > 0 { f64::INFINITY * t.signum() } else { 0.0 };
        }
        t * 2f64.powi(e as i32)
    }

    /// Exact decimal expansion (finite for any dyadic) without the
    /// precision suffix.
    pub fn to_decimal_string(&self) -> String {
        if self.is_zero() {
            return "0".to_owned();
        }
        let neg = self.signum() < 0;
        let mag = self.mantissa.magnitude().clone();
        let body = if self.exp >= 0 {
            (mag << self.exp as u64).to_string()
        } else {
            let k = (-self.exp) as u64;
            // m / 2^k == m * 5^k / 10^k
            let scaled = mag * BigUint::from(5u8).pow(k as u32);
            let digits = scaled.to_string();
            let k = k as usize;
            let with_point = if digits.len() > k {
                let (int, frac) = digits.split_at(digits.len() - k);
                format!("{int}.{frac}")
            } else {
                format!("0.{}{}", "0".repeat(k - digits.len()), digits)
            };
            let trimmed = with_point.trim_end_matches('0');
            let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
            trimmed.to_owned()
        };
        if neg {
            format!("-{body}")
        } else {
            body
        }
    }
}

const MIN_FLOAT_BITS: u32 = 8;

/// Round-half-even shift right by `s` bits; returns the rounded magnitude
/// (with original sign) and an exponent carry (1 if the rounding overflowed
/// into an extra bit).
fn round_shift_right(m: &BigInt, s: u64, prec: u32) -> (BigInt, i64) {
    let (sign, mag) = (m.sign(), m.magnitude());
    let q: BigUint = mag >> s;
    let rem: BigUint = mag - (&q << s);
    let half: BigUint = BigUint::one() << (s - 1);
    let mut q = match rem.cmp(&half) {
        Ordering::Greater => q + 1u8,
        Ordering::Equal => {
            if q.bit(0) {
                q + 1u8
            } else {
                q
            }
        }
        Ordering::Less => q,
    };
    let mut carry = 0i64;
    if q.bits() > prec as u64 {
        q >>= 1u8;
        carry = 1;
    }
    let signed = BigInt::from_biguint(sign, q);
    (signed, carry)
}

// ---------------------------------------------------------------------------
// The unified scalar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Rational(BigRational),
    Quadratic(Quad),
    Float(Dyadic),
}

impl Scalar {
    pub fn backend(&self) -> Backend {
        match self {
            Scalar::Rational(_) => Backend::Rational,
            Scalar::Quadratic(q) => Backend::Quadratic { d: q.d },
            Scalar::Float(f) => Backend::Float { bits: f.prec() },
        }
    }

    pub fn zero(backend: Backend) -> Scalar {
        match backend {
            Backend::Rational => Scalar::Rational(BigRational::zero()),
            Backend::Quadratic { d } => Scalar::Quadratic(Quad {
                a: BigRational::zero(),
                b: BigRational::zero(),
                d,
            }),
            Backend::Float { bits } => Scalar::Float(Dyadic::zero(bits)),
        }
    }

    pub fn one(backend: Backend) -> Scalar {
        Scalar::from_integer(1, backend)
    }

    pub fn from_integer(n: i64, backend: Backend) -> Scalar {
        let r = BigRational::from_integer(BigInt::from(n));
        Scalar::from_rational_value(r, backend)
    }

    /// Embed a rational value into any backend (rounding for floats).
    pub fn from_rational_value(r: BigRational, backend: Backend) -> Scalar {
        match backend {
            Backend::Rational => Scalar::Rational(r),
            Backend::Quadratic { d } => Scalar::Quadratic(Quad {
                a: r,
                b: BigRational::zero(),
                d,
            }),
            Backend::Float { bits } => Scalar::Float(Dyadic::from_rational(&r, bits)),
        }
    }

    pub fn from_ratio(num: i64, den: i64, backend: Backend) -> Scalar {
        let r = BigRational::new(BigInt::from(num), BigInt::from(den));
        Scalar::from_rational_value(r, backend)
    }

    fn mixed(&self, rhs: &Scalar) -> ArithError {
        ArithError::MixedField {
            left: self.backend(),
            right: rhs.backend(),
        }
    }

    pub fn add(&self, rhs: &Scalar) -> Result<Scalar, ArithError> {
        match (self, rhs) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Ok(Scalar::Rational(a + b)),
            (Scalar::Quadratic(a), Scalar::Quadratic(b)) => Ok(Scalar::Quadratic(a.add(b)?)),
            (Scalar::Float(a), Scalar::Float(b)) => Ok(Scalar::Float(a.add(b))),
            _ => Err(self.mixed(rhs)),
        }
    }

    pub fn sub(&self, rhs: &Scalar) -> Result<Scalar, ArithError> {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Scalar) -> Result<Scalar, ArithError> {
        match (self, rhs) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Ok(Scalar::Rational(a * b)),
            (Scalar::Quadratic(a), Scalar::Quadratic(b)) => Ok(Scalar::Quadratic(a.mul(b)?)),
            (Scalar::Float(a), Scalar::Float(b)) => Ok(Scalar::Float(a.mul(b))),
            _ => Err(self.mixed(rhs)),
        }
    }

    pub fn div(&self, rhs: &Scalar) -> Result<Scalar, ArithError> {
        match (self, rhs) {
            (Scalar::Rational(a), Scalar::Rational(b)) => {
                if b.is_zero() {
                    Err(ArithError::DivisionByZero)
                } else {
                    Ok(Scalar::Rational(a / b))
                }
            }
            (Scalar::Quadratic(a), Scalar::Quadratic(b)) => {
                Ok(Scalar::Quadratic(a.mul(&b.inv()?)?))
            }
            (Scalar::Float(a), Scalar::Float(b)) => Ok(Scalar::Float(a.div(b)?)),
            _ => Err(self.mixed(rhs)),
        }
    }

    pub fn neg(&self) -> Scalar {
        match self {
            Scalar::Rational(a) => Scalar::Rational(-a),
            Scalar::Quadratic(a) => Scalar::Quadratic(a.neg()),
            Scalar::Float(a) => Scalar::Float(a.neg()),
        }
    }

    /// Structural zero test (exact for every backend).
    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Rational(a) => a.is_zero(),
            Scalar::Quadratic(a) => a.a.is_zero() && a.b.is_zero(),
            Scalar::Float(a) => a.is_zero(),
        }
    }

    /// Certified sign. For floats a normalized nonzero mantissa sits far
    /// outside the ulp window, so the sign never needs a fuzz margin.
    pub fn signum(&self) -> i8 {
        match self {
            Scalar::Rational(a) => rat_sign(a),
            Scalar::Quadratic(a) => a.signum(),
            Scalar::Float(a) => a.signum(),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.signum() > 0
    }

    /// Total order on exact backends; floats may return
    /// [`ArithError::Undecidable`] when the values agree to within one ulp.
    pub fn compare(&self, rhs: &Scalar) -> Result<Ordering, ArithError> {
        match (self, rhs) {
            (Scalar::Rational(a), Scalar::Rational(b)) => Ok(a.cmp(b)),
            (Scalar::Quadratic(a), Scalar::Quadratic(b)) => {
                a.same_field(b)?;
                Ok(match a.add(&b.neg())?.signum() {
                    1 => Ordering::Greater,
                    -1 => Ordering::Less,
                    _ => Ordering::Equal,
                })
            }
            (Scalar::Float(a), Scalar::Float(b)) => a.cmp_fuzzy(b),
            _ => Err(self.mixed(rhs)),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Rational(a) => rat_to_f64(a),
            Scalar::Quadratic(a) => a.to_f64(),
            Scalar::Float(a) => a.to_f64(),
        }
    }

    /// Sum a slice; `backend` supplies the zero for the empty case.
    pub fn sum(values: &[Scalar], backend: Backend) -> Result<Scalar, ArithError> {
        let mut acc = Scalar::zero(backend);
        for v in values {
            acc = acc.add(v)?;
        }
        Ok(acc)
    }

    /// Parse with the backend inferred from the text itself: `sqrt` marks a
    /// quadratic, a decimal point or `~prec=` suffix marks a float, anything
    /// else is rational.
    pub fn parse(text: &str) -> Result<Scalar, ParseError> {
        let t = text.trim();
        if t.contains("sqrt") {
            return parse_quad(t).map(Scalar::Quadratic);
        }
        if t.contains("~prec=") || t.contains('.') {
            return parse_float(t, None).map(Scalar::Float);
        }
        let r = BigRational::from_str(t).map_err(|_| ParseError::bad(t))?;
        Ok(Scalar::Rational(r))
    }

    /// Parse under an explicit backend; plain rational text is accepted by
    /// every backend and embedded.
    pub fn parse_with_backend(text: &str, backend: Backend) -> Result<Scalar, ParseError> {
        let t = text.trim();
        match backend {
            Backend::Rational => {
                let r = BigRational::from_str(t).map_err(|_| ParseError::bad(t))?;
                Ok(Scalar::Rational(r))
            }
            Backend::Quadratic { d } => {
                if t.contains("sqrt") {
                    let q = parse_quad(t)?;
                    if q.d != d {
                        return Err(ParseError::Arith(ArithError::MixedField {
                            left: Backend::Quadratic { d: q.d },
                            right: Backend::Quadratic { d },
                        }));
                    }
                    Ok(Scalar::Quadratic(q))
                } else {
                    let r = BigRational::from_str(t).map_err(|_| ParseError::bad(t))?;
                    Ok(Scalar::Quadratic(Quad::new(r, BigRational::zero(), d)?))
                }
            }
            Backend::Float { bits } => Ok(Scalar::Float(parse_float(t, Some(bits))?)),
        }
    }
}

fn parse_rat(t: &str) -> Result<BigRational, ParseError> {
    BigRational::from_str(t.trim()).map_err(|_| ParseError::bad(t))
}

/// Accepts `a`, `b*sqrt(d)`, `sqrt(d)`, `a+b*sqrt(d)`, `a-b*sqrt(d)` and the
/// signed variants; `a`, `b` are rationals.
fn parse_quad(t: &str) -> Result<Quad, ParseError> {
    let compact: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    let idx = compact.find("sqrt(").ok_or_else(|| ParseError::bad(t))?;
    let close = compact[idx..]
        .find(')')
        .map(|p| idx + p)
        .ok_or_else(|| ParseError::bad(t))?;
    if close + 1 != compact.len() {
        return Err(ParseError::bad(t));
    }
    let d: u64 = compact[idx + 5..close]
        .parse()
        .map_err(|_| ParseError::bad(t))?;
    // Everything before "sqrt(" is "<a><sign><b>*" or "<sign><b>*" or "".
    let head = &compact[..idx];
    let head = head.strip_suffix('*').unwrap_or(head);
    // Split off the b coefficient: scan from the right for a '+' or '-' that
    // is not inside the leading rational (i.e. not at position 0 and not
    // right after '/').
    let (a_txt, b_txt) = split_linear(head);
    let a = if a_txt.is_empty() {
        BigRational::zero()
    } else {
        parse_rat(a_txt)?
    };
    let b = match b_txt {
        "" | "+" => BigRational::one(),
        "-" => -BigRational::one(),
        other => parse_rat(other)?,
    };
    Quad::new(a, b, d).map_err(ParseError::Arith)
}

/// Split `"<a><+/-b>"` at the sign that separates the constant part from the
/// sqrt coefficient. The separator is the last '+' or '-' that is not the
/// leading sign and does not follow '/' or another sign.
fn split_linear(head: &str) -> (&str, &str) {
    let bytes = head.as_bytes();
    for i in (1..bytes.len()).rev() {
        let c = bytes[i];
        if c == b'+' || c == b'-' {
            let prev = bytes[i - 1];
            if prev != b'/' && prev != b'+' && prev != b'-' {
                return (&head[..i], &head[i..]);
            }
        }
    }
    ("", head)
}

/// Accepts `123`, `-0.25`, `3.5~prec=64`, `1/3~prec=128`. Without a suffix
/// the hint (or 53 bits) applies.
fn parse_float(t: &str, hint: Option<u32>) -> Result<Dyadic, ParseError> {
    let (body, bits) = match t.split_once("~prec=") {
        Some((body, suffix)) => {
            let bits: u32 = suffix.trim().parse().map_err(|_| ParseError::bad(t))?;
            (body.trim(), bits)
        }
        None => (t, hint.unwrap_or(53)),
    };
    if body.contains('/') {
        let r = parse_rat(body)?;
        return Ok(Dyadic::from_rational(&r, bits));
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if frac_part.contains(['+', '-']) {
        return Err(ParseError::bad(t));
    }
    let digits = format!(
        "{}{}",
        if int_part.is_empty() { "0" } else { int_part },
        frac_part
    );
    let num = BigInt::from_str(&digits).map_err(|_| ParseError::bad(t))?;
    let den = BigInt::from(10u8).pow(frac_part.len() as u32);
    let r = BigRational::new(num, den);
    Ok(Dyadic::from_rational(&r, bits))
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rational(r) => write!(f, "{r}"),
            Scalar::Quadratic(q) => {
                // Always keep the sqrt term so the backend survives a
                // round-trip even when b == 0.
                if q.b.is_negative() {
                    write!(f, "{}-{}*sqrt({})", q.a, -&q.b, q.d)
                } else {
                    write!(f, "{}+{}*sqrt({})", q.a, q.b, q.d)
                }
            }
            Scalar::Float(d) => write!(f, "{}~prec={}", d.to_decimal_string(), d.prec()),
        }
    }
}

impl FromStr for Scalar {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        Scalar::parse(s)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Scalar::parse(&text).map_err(serde::de::Error::custom)
    }
}
