//! Discretely valued scalars normalised so that v(ell) = 1.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub type Q = Ratio<i64>;

/// A rational valuation or `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValQ {
    Fin(Q),
    Inf,
}

impl ValQ {
    pub const ZERO: ValQ = ValQ::Fin(Ratio::new_raw(0, 1));

    pub fn int(n: i64) -> Self {
        ValQ::Fin(Q::from_integer(n))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        ValQ::Fin(Q::new(n, d))
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, ValQ::Inf)
    }

    pub fn fin(&self) -> Option<Q> {
        match self {
            ValQ::Fin(q) => Some(*q),
            ValQ::Inf => None,
        }
    }

    /// Finite value; panics on `+inf`.
    pub fn q(&self) -> Q {
        self.fin().expect("finite valuation expected")
    }

    pub fn scale(self, k: Q) -> Self {
        match self {
            ValQ::Fin(q) => ValQ::Fin(q * k),
            ValQ::Inf => ValQ::Inf,
        }
    }

    pub fn max0(self) -> Self {
        self.max(ValQ::ZERO)
    }
}

impl From<Q> for ValQ {
    fn from(q: Q) -> Self {
        ValQ::Fin(q)
    }
}

impl From<i64> for ValQ {
    fn from(n: i64) -> Self {
        ValQ::int(n)
    }
}

impl Add for ValQ {
    type Output = ValQ;
    fn add(self, o: ValQ) -> ValQ {
        match (self, o) {
            (ValQ::Fin(a), ValQ::Fin(b)) => ValQ::Fin(a + b),
            _ => ValQ::Inf,
        }
    }
}

impl Sub for ValQ {
    type Output = ValQ;
    /// `inf - q = inf`; subtracting `inf` is a logic error.
    fn sub(self, o: ValQ) -> ValQ {
        match (self, o) {
            (ValQ::Fin(a), ValQ::Fin(b)) => ValQ::Fin(a - b),
            (ValQ::Inf, ValQ::Fin(_)) => ValQ::Inf,
            _ => panic!("cannot subtract an infinite valuation"),
        }
    }
}

impl Mul<i64> for ValQ {
    type Output = ValQ;
    fn mul(self, k: i64) -> ValQ {
        self.scale(Q::from_integer(k))
    }
}

impl fmt::Display for ValQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValQ::Inf => write!(f, "+inf"),
            ValQ::Fin(q) if q.is_integer() => write!(f, "{}", q.numer()),
            ValQ::Fin(q) => write!(f, "{}/{}", q.numer(), q.denom()),
        }
    }
}

impl FromStr for ValQ {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "+inf" || s == "inf" {
            return Ok(ValQ::Inf);
        }
        let bad = || Error::Invalid(format!("bad valuation {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => {
                let n: i64 = n.trim().parse().map_err(|_| bad())?;
                let d: i64 = d.trim().parse().map_err(|_| bad())?;
                if d == 0 {
                    return Err(bad());
                }
                Ok(ValQ::frac(n, d))
            }
            None => Ok(ValQ::int(s.parse().map_err(|_| bad())?)),
        }
    }
}

impl serde::Serialize for ValQ {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for ValQ {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether a scalar is zero, known to be nonzero, or too imprecise to tell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroState {
    NonZero,
    Zero,
    Indistinct,
}

/// Field arithmetic shared by every scalar backend.
///
/// Values carry their own context (the prime, and a precision where relevant),
/// so constants are produced from an existing value with [`Scalar::lift`].
pub trait Scalar: Clone + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn ell(&self) -> u64;
    fn lift(&self, q: &BigRational) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn inv(&self) -> Result<Self>;
    fn val(&self) -> Result<ValQ>;
    fn zero_state(&self) -> ZeroState;
    fn to_wire(&self) -> Value;

    fn zero(&self) -> Self {
        self.lift(&BigRational::zero())
    }

    fn one(&self) -> Self {
        self.lift(&BigRational::one())
    }

    fn int(&self, n: i64) -> Self {
        self.lift(&BigRational::from_integer(n.into()))
    }

    fn div(&self, o: &Self) -> Result<Self> {
        Ok(self.mul(&o.inv()?))
    }

    fn is_zero(&self) -> Result<bool> {
        match self.zero_state() {
            ZeroState::Zero => Ok(true),
            ZeroState::NonZero => Ok(false),
            ZeroState::Indistinct => Err(Error::PrecisionExhausted(format!(
                "{self} cannot be told apart from 0"
            ))),
        }
    }

    /// A lower bound for the valuation, exact when the value is distinct
    /// from 0 at the known precision.
    fn val_at_least(&self) -> ValQ {
        self.val().expect("exact backends always have a valuation")
    }

    fn pow(&self, n: u32) -> Self {
        let mut acc = self.one();
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }
}

/// Exponent of `ell` in a nonzero integer, and the cofactor.
pub fn split_ell(n: &BigInt, ell: u64) -> (i64, BigInt) {
    let l = BigInt::from(ell);
    let mut n = n.clone();
    let mut k = 0;
    loop {
        let (q, r) = n.div_rem(&l);
        if !r.is_zero() {
            return (k, n);
        }
        n = q;
        k += 1;
    }
}

/// Valuation of a rational number.
pub fn val_rational(q: &BigRational, ell: u64) -> ValQ {
    if q.is_zero() {
        return ValQ::Inf;
    }
    let (a, _) = split_ell(q.numer(), ell);
    let (b, _) = split_ell(q.denom(), ell);
    ValQ::int(a - b)
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Invalid(format!("bad rational {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// An exact rational number with the prime used for its valuation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactQ {
    pub q: BigRational,
    pub ell: u64,
}

impl ExactQ {
    pub fn new(q: BigRational, ell: u64) -> Self {
        ExactQ { q, ell }
    }

    pub fn from_i64(n: i64, ell: u64) -> Self {
        ExactQ::new(BigRational::from_integer(n.into()), ell)
    }

    pub fn parse(s: &str, ell: u64) -> Result<Self> {
        Ok(ExactQ::new(parse_rational(s)?, ell))
    }
}

impl fmt::Display for ExactQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(&self.q))
    }
}

impl Scalar for ExactQ {
    fn ell(&self) -> u64 {
        self.ell
    }
    fn lift(&self, q: &BigRational) -> Self {
        ExactQ::new(q.clone(), self.ell)
    }
    fn add(&self, o: &Self) -> Self {
        ExactQ::new(&self.q + &o.q, self.ell)
    }
    fn sub(&self, o: &Self) -> Self {
        ExactQ::new(&self.q - &o.q, self.ell)
    }
    fn mul(&self, o: &Self) -> Self {
        ExactQ::new(&self.q * &o.q, self.ell)
    }
    fn neg(&self) -> Self {
        ExactQ::new(-&self.q, self.ell)
    }
    fn inv(&self) -> Result<Self> {
        if self.q.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(ExactQ::new(self.q.recip(), self.ell))
    }
    fn val(&self) -> Result<ValQ> {
        Ok(val_rational(&self.q, self.ell))
    }
    fn zero_state(&self) -> ZeroState {
        if self.q.is_zero() {
            ZeroState::Zero
        } else {
            ZeroState::NonZero
        }
    }
    fn to_wire(&self) -> Value {
        Value::String(self.to_string())
    }
}

fn ell_pow(ell: u64, n: i64) -> BigInt {
    num_traits::pow(BigInt::from(ell), n.max(0) as usize)
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> BigInt {
    let e = a.extended_gcd(m);
    e.x.mod_floor(m)
}

/// Capped-relative-precision ell-adic number: `ell^val * unit` with the unit
/// known modulo `ell^prec`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PadicApprox {
    Value {
        ell: u64,
        val: i64,
        unit: BigInt,
        prec: u32,
    },
    /// Zero to the known precision: the true value has valuation at least
    /// `floor`. A `floor` of `None` is the exact zero.
    Zero { ell: u64, floor: Option<i64>, prec: u32 },
}

impl PadicApprox {
    /// Image of a rational number with `prec` unit digits.
    pub fn from_rational(q: &BigRational, ell: u64, prec: u32) -> Self {
        if q.is_zero() {
            return PadicApprox::Zero { ell, floor: None, prec };
        }
        let (a, n) = split_ell(q.numer(), ell);
        let (b, d) = split_ell(q.denom(), ell);
        let m = ell_pow(ell, prec as i64);
        let unit = (n * mod_inverse(&d, &m)).mod_floor(&m);
        PadicApprox::Value { ell, val: a - b, unit, prec }
    }

    pub fn from_i64(n: i64, ell: u64, prec: u32) -> Self {
        Self::from_rational(&BigRational::from_integer(n.into()), ell, prec)
    }

    pub fn prec(&self) -> u32 {
        match self {
            PadicApprox::Value { prec, .. } | PadicApprox::Zero { prec, .. } => *prec,
        }
    }

    /// Absolute precision: the value is known modulo `ell^abs_prec`.
    pub fn abs_prec(&self) -> Option<i64> {
        match self {
            PadicApprox::Value { val, prec, .. } => Some(val + *prec as i64),
            PadicApprox::Zero { floor, .. } => *floor,
        }
    }

    /// Base-ell digits of the unit, least significant first.
    pub fn digits(&self) -> Vec<u64> {
        match self {
            PadicApprox::Zero { .. } => Vec::new(),
            PadicApprox::Value { ell, unit, prec, .. } => {
                let l = BigInt::from(*ell);
                let mut u = unit.clone();
                (0..*prec)
                    .map(|_| {
                        let (q, r) = u.div_mod_floor(&l);
                        u = q;
                        r.to_u64().unwrap_or(0)
                    })
                    .collect()
            }
        }
    }

    /// Reduce to a representative integer (or rational) congruent modulo
    /// `ell^abs_prec`; used in tests against exact arithmetic.
    pub fn to_rational_approx(&self) -> BigRational {
        match self {
            PadicApprox::Zero { .. } => BigRational::zero(),
            PadicApprox::Value { ell, val, unit, .. } => {
                let u = BigRational::from_integer(unit.clone());
                if *val >= 0 {
                    u * BigRational::from_integer(ell_pow(*ell, *val))
                } else {
                    u / BigRational::from_integer(ell_pow(*ell, -*val))
                }
            }
        }
    }

    fn build(ell: u64, val: i64, s: BigInt, digits: i64, prec_cap: u32) -> Self {
        // `s` is known modulo ell^digits and scaled by ell^val
        if digits <= 0 {
            return PadicApprox::Zero { ell, floor: Some(val + digits.max(0)), prec: prec_cap };
        }
        let m = ell_pow(ell, digits);
        let s = s.mod_floor(&m);
        if s.is_zero() {
            return PadicApprox::Zero { ell, floor: Some(val + digits), prec: prec_cap };
        }
        let (k, u) = split_ell(&s, ell);
        let left = digits - k;
        let prec = left.min(prec_cap as i64) as u32;
        let u = u.mod_floor(&ell_pow(ell, prec as i64));
        PadicApprox::Value { ell, val: val + k, unit: u, prec }
    }

    fn ell_of(&self) -> u64 {
        match self {
            PadicApprox::Value { ell, .. } | PadicApprox::Zero { ell, .. } => *ell,
        }
    }
}

impl fmt::Display for PadicApprox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PadicApprox::Zero { floor: None, .. } => write!(f, "0"),
            PadicApprox::Zero { floor: Some(k), ell, .. } => write!(f, "O({ell}^{k})"),
            PadicApprox::Value { ell, val, unit, prec } => {
                write!(f, "{ell}^{val}*({unit} + O({ell}^{prec}))")
            }
        }
    }
}

impl Scalar for PadicApprox {
    fn ell(&self) -> u64 {
        self.ell_of()
    }

    fn lift(&self, q: &BigRational) -> Self {
        PadicApprox::from_rational(q, self.ell_of(), self.prec())
    }

    fn add(&self, o: &Self) -> Self {
        use PadicApprox::*;
        let ell = self.ell_of();
        let cap = self.prec().max(o.prec());
        match (self, o) {
            (Zero { floor: None, .. }, x) | (x, Zero { floor: None, .. }) => x.clone(),
            (Zero { floor: Some(a), .. }, Zero { floor: Some(b), .. }) => {
                Zero { ell, floor: Some(*a.min(b)), prec: cap }
            }
            (Zero { floor: Some(f), .. }, v @ Value { val, prec, .. })
            | (v @ Value { val, prec, .. }, Zero { floor: Some(f), .. }) => {
                let abs = (*f).min(val + *prec as i64);
                if abs <= *val {
                    return Zero { ell, floor: Some(abs), prec: cap };
                }
                let PadicApprox::Value { unit, .. } = v else { unreachable!() };
                PadicApprox::build(ell, *val, unit.clone(), abs - val, *prec)
            }
            (
                Value { val: v1, unit: u1, prec: n1, .. },
                Value { val: v2, unit: u2, prec: n2, .. },
            ) => {
                let abs = (v1 + *n1 as i64).min(v2 + *n2 as i64);
                let lo = (*v1).min(*v2);
                let s = u1 * ell_pow(ell, v1 - lo) + u2 * ell_pow(ell, v2 - lo);
                PadicApprox::build(ell, lo, s, abs - lo, (*n1).max(*n2))
            }
        }
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    fn mul(&self, o: &Self) -> Self {
        use PadicApprox::*;
        let ell = self.ell_of();
        let cap = self.prec().min(o.prec());
        match (self, o) {
            (Zero { floor: None, .. }, _) | (_, Zero { floor: None, .. }) => {
                Zero { ell, floor: None, prec: cap }
            }
            (Zero { floor: Some(a), .. }, Zero { floor: Some(b), .. }) => {
                Zero { ell, floor: Some(a + b), prec: cap }
            }
            (Zero { floor: Some(f), .. }, Value { val, .. })
            | (Value { val, .. }, Zero { floor: Some(f), .. }) => {
                Zero { ell, floor: Some(f + val), prec: cap }
            }
            (
                Value { val: v1, unit: u1, prec: n1, .. },
                Value { val: v2, unit: u2, prec: n2, .. },
            ) => {
                let prec = (*n1).min(*n2);
                let m = ell_pow(ell, prec as i64);
                Value { ell, val: v1 + v2, unit: (u1 * u2).mod_floor(&m), prec }
            }
        }
    }

    fn neg(&self) -> Self {
        match self {
            PadicApprox::Value { ell, val, unit, prec } => {
                let m = ell_pow(*ell, *prec as i64);
                PadicApprox::Value { ell: *ell, val: *val, unit: (-unit).mod_floor(&m), prec: *prec }
            }
            z => z.clone(),
        }
    }

    fn inv(&self) -> Result<Self> {
        match self {
            PadicApprox::Zero { floor: None, .. } => Err(Error::DivisionByZero),
            PadicApprox::Zero { .. } => Err(Error::PrecisionExhausted(
                "inverting a value indistinguishable from 0".into(),
            )),
            PadicApprox::Value { ell, val, unit, prec } => {
                let m = ell_pow(*ell, *prec as i64);
                Ok(PadicApprox::Value { ell: *ell, val: -val, unit: mod_inverse(unit, &m), prec: *prec })
            }
        }
    }

    fn val(&self) -> Result<ValQ> {
        match self {
            PadicApprox::Value { val, .. } => Ok(ValQ::int(*val)),
            PadicApprox::Zero { floor: None, .. } => Ok(ValQ::Inf),
            PadicApprox::Zero { floor: Some(k), .. } => Err(Error::PrecisionExhausted(format!(
                "value is 0 modulo ell^{k}"
            ))),
        }
    }

    fn val_at_least(&self) -> ValQ {
        match self {
            PadicApprox::Value { val, .. } => ValQ::int(*val),
            PadicApprox::Zero { floor, .. } => floor.map_or(ValQ::Inf, ValQ::int),
        }
    }

    fn zero_state(&self) -> ZeroState {
        match self {
            PadicApprox::Value { .. } => ZeroState::NonZero,
            PadicApprox::Zero { floor: None, .. } => ZeroState::Zero,
            PadicApprox::Zero { .. } => ZeroState::Indistinct,
        }
    }

    fn to_wire(&self) -> Value {
        match self {
            PadicApprox::Zero { floor: None, .. } => Value::String("0".into()),
            PadicApprox::Zero { floor: Some(k), prec, .. } => {
                json!({"val": format!(">={k}"), "digits": [], "prec": prec})
            }
            PadicApprox::Value { val, prec, .. } => {
                json!({"val": val.to_string(), "digits": self.digits(), "prec": prec})
            }
        }
    }
}

/// Elements `x + y*sqrt(ell)` of the ramified quadratic extension, with the
/// valuation extended so that v(sqrt(ell)) = 1/2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RamQuad {
    pub x: BigRational,
    pub y: BigRational,
    pub ell: u64,
}

impl RamQuad {
    pub fn new(x: BigRational, y: BigRational, ell: u64) -> Self {
        RamQuad { x, y, ell }
    }

    pub fn rational(x: BigRational, ell: u64) -> Self {
        RamQuad::new(x, BigRational::zero(), ell)
    }

    pub fn from_i64s(x: i64, y: i64, ell: u64) -> Self {
        RamQuad::new(
            BigRational::from_integer(x.into()),
            BigRational::from_integer(y.into()),
            ell,
        )
    }

    fn l(&self) -> BigRational {
        BigRational::from_integer(self.ell.into())
    }
}

impl fmt::Display for RamQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.y.is_zero() {
            return f.write_str(&format_rational(&self.x));
        }
        let sign = if self.y.is_negative() { "-" } else { "+" };
        write!(
            f,
            "{}{}{}*sqrt({})",
            format_rational(&self.x),
            sign,
            format_rational(&self.y.abs()),
            self.ell
        )
    }
}

impl Scalar for RamQuad {
    fn ell(&self) -> u64 {
        self.ell
    }
    fn lift(&self, q: &BigRational) -> Self {
        RamQuad::rational(q.clone(), self.ell)
    }
    fn add(&self, o: &Self) -> Self {
        RamQuad::new(&self.x + &o.x, &self.y + &o.y, self.ell)
    }
    fn sub(&self, o: &Self) -> Self {
        RamQuad::new(&self.x - &o.x, &self.y - &o.y, self.ell)
    }
    fn mul(&self, o: &Self) -> Self {
        RamQuad::new(
            &self.x * &o.x + self.l() * &self.y * &o.y,
            &self.x * &o.y + &self.y * &o.x,
            self.ell,
        )
    }
    fn neg(&self) -> Self {
        RamQuad::new(-&self.x, -&self.y, self.ell)
    }
    fn inv(&self) -> Result<Self> {
        let n = &self.x * &self.x - self.l() * &self.y * &self.y;
        if n.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(RamQuad::new(&self.x / &n, -&self.y / &n, self.ell))
    }
    fn val(&self) -> Result<ValQ> {
        let a = val_rational(&self.x, self.ell);
        let b = val_rational(&self.y, self.ell) + ValQ::frac(1, 2);
        Ok(a.min(b))
    }
    fn zero_state(&self) -> ZeroState {
        if self.x.is_zero() && self.y.is_zero() {
            ZeroState::Zero
        } else {
            ZeroState::NonZero
        }
    }
    fn to_wire(&self) -> Value {
        Value::String(self.to_string())
    }
}

/// Elements `x + y*w` of the unramified quadratic extension, where `w` is a
/// root of `X^2 - t X - n`, irreducible modulo `ell`. Since 1 and `w` reduce
/// to a basis of the residue field, v(x + y*w) = min(v(x), v(y)).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnramQuad {
    pub x: BigRational,
    pub y: BigRational,
    pub ell: u64,
    t: i64,
    n: i64,
}

impl UnramQuad {
    /// `w^2 = -w - 1` for `ell = 2`, `w^2 = n` for the least non-residue `n`
    /// otherwise.
    pub fn new(x: BigRational, y: BigRational, ell: u64) -> Result<Self> {
        let (t, n) = if ell == 2 {
            (-1, -1)
        } else {
            let n = (2..ell)
                .find(|&n| (1..ell).all(|k| k * k % ell != n))
                .ok_or_else(|| Error::Invalid(format!("{ell} is not an odd prime")))?;
            (0, n as i64)
        };
        Ok(UnramQuad { x, y, ell, t, n })
    }

    pub fn from_i64s(x: i64, y: i64, ell: u64) -> Result<Self> {
        UnramQuad::new(
            BigRational::from_integer(x.into()),
            BigRational::from_integer(y.into()),
            ell,
        )
    }

    fn with(&self, x: BigRational, y: BigRational) -> Self {
        UnramQuad { x, y, ell: self.ell, t: self.t, n: self.n }
    }
}

impl fmt::Display for UnramQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.y.is_zero() {
            return f.write_str(&format_rational(&self.x));
        }
        let sign = if self.y.is_negative() { "-" } else { "+" };
        write!(f, "{}{}{}*w", format_rational(&self.x), sign, format_rational(&self.y.abs()))
    }
}

impl Scalar for UnramQuad {
    fn ell(&self) -> u64 {
        self.ell
    }
    fn lift(&self, q: &BigRational) -> Self {
        self.with(q.clone(), BigRational::zero())
    }
    fn add(&self, o: &Self) -> Self {
        self.with(&self.x + &o.x, &self.y + &o.y)
    }
    fn sub(&self, o: &Self) -> Self {
        self.with(&self.x - &o.x, &self.y - &o.y)
    }
    fn mul(&self, o: &Self) -> Self {
        let (t, n) = (BigRational::from_integer(self.t.into()), BigRational::from_integer(self.n.into()));
        let yy = &self.y * &o.y;
        self.with(&self.x * &o.x + &n * &yy, &self.x * &o.y + &self.y * &o.x + t * yy)
    }
    fn neg(&self) -> Self {
        self.with(-&self.x, -&self.y)
    }
    fn inv(&self) -> Result<Self> {
        let (t, n) = (BigRational::from_integer(self.t.into()), BigRational::from_integer(self.n.into()));
        let cx = &self.x + &t * &self.y;
        let norm = &self.x * &cx - n * &self.y * &self.y;
        if norm.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.with(cx / &norm, -&self.y / &norm))
    }
    fn val(&self) -> Result<ValQ> {
        Ok(val_rational(&self.x, self.ell).min(val_rational(&self.y, self.ell)))
    }
    fn zero_state(&self) -> ZeroState {
        if self.x.is_zero() && self.y.is_zero() {
            ZeroState::Zero
        } else {
            ZeroState::NonZero
        }
    }
    fn to_wire(&self) -> Value {
        Value::String(self.to_string())
    }
}

/// A primitive `p`-th root of unity in `Z_ell`, lifted to `prec` digits.
///
/// For `p = 2` this is `-1` for every `ell`.
pub fn hensel_root_of_unity(p: u64, ell: u64, prec: u32) -> Result<PadicApprox> {
    if prec == 0 {
        return Err(Error::Invalid("precision must be positive".into()));
    }
    if p == 2 {
        return Ok(PadicApprox::from_i64(-1, ell, prec));
    }
    if ell < 2 || (ell - 1) % p != 0 {
        return Err(Error::NoRootExists { p, ell });
    }
    let pw = |b: u64, e: u64| (0..e).fold(1u64, |a, _| a * b % ell);
    let r = (2..ell)
        .find(|&r| pw(r, p) == 1)
        .ok_or(Error::NoRootExists { p, ell })?;
    let m = ell_pow(ell, prec as i64);
    let pb = BigInt::from(p);
    let mut z = BigInt::from(r);
    // Newton on f(z) = z^p - 1; f'(z) = p z^(p-1) is a unit since p != ell
    for _ in 0..=prec.ilog2() + 1 {
        let zp1 = z.modpow(&(&pb - 1u32), &m);
        let f = (&zp1 * &z - 1u32).mod_floor(&m);
        let df = (&pb * &zp1).mod_floor(&m);
        z = (&z - f * mod_inverse(&df, &m)).mod_floor(&m);
    }
    Ok(PadicApprox::Value { ell, val: 0, unit: z, prec })
}
