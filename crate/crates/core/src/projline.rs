//! Points of the projective line and fractional linear transformations.

use std::fmt;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::valuation::{Scalar, ZeroState};

#[derive(Clone, Debug, PartialEq)]
pub enum ProjPoint<F> {
    Finite(F),
    Infinity,
}

impl<F: Scalar> ProjPoint<F> {
    pub fn is_infinity(&self) -> bool {
        matches!(self, ProjPoint::Infinity)
    }

    pub fn finite(&self) -> Option<&F> {
        match self {
            ProjPoint::Finite(x) => Some(x),
            ProjPoint::Infinity => None,
        }
    }

    /// Equality of points; approximants that cannot be separated raise an error.
    pub fn same(&self, o: &Self) -> Result<bool> {
        match (self, o) {
            (ProjPoint::Infinity, ProjPoint::Infinity) => Ok(true),
            (ProjPoint::Finite(x), ProjPoint::Finite(y)) => x.sub(y).is_zero(),
            _ => Ok(false),
        }
    }

    pub fn to_wire(&self) -> Value {
        match self {
            ProjPoint::Finite(x) => x.to_wire(),
            ProjPoint::Infinity => Value::String("inf".into()),
        }
    }
}

impl<F: Scalar> fmt::Display for ProjPoint<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjPoint::Finite(x) => write!(f, "{x}"),
            ProjPoint::Infinity => write!(f, "inf"),
        }
    }
}

/// The map z -> (a z + b) / (c z + d), kept as an unnormalised matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mobius<F> {
    pub a: F,
    pub b: F,
    pub c: F,
    pub d: F,
}

impl<F: Scalar> Mobius<F> {
    pub fn new(a: F, b: F, c: F, d: F) -> Self {
        Mobius { a, b, c, d }
    }

    pub fn identity(ctx: &F) -> Self {
        Mobius::new(ctx.one(), ctx.zero(), ctx.zero(), ctx.one())
    }

    pub fn det(&self) -> F {
        self.a.mul(&self.d).sub(&self.b.mul(&self.c))
    }

    pub fn apply(&self, z: &ProjPoint<F>) -> Result<ProjPoint<F>> {
        let (num, den) = match z {
            ProjPoint::Infinity => (self.a.clone(), self.c.clone()),
            ProjPoint::Finite(x) => (
                self.a.mul(x).add(&self.b),
                self.c.mul(x).add(&self.d),
            ),
        };
        match den.zero_state() {
            ZeroState::Zero => Ok(ProjPoint::Infinity),
            ZeroState::NonZero => Ok(ProjPoint::Finite(num.div(&den)?)),
            ZeroState::Indistinct => Err(Error::PrecisionExhausted(format!(
                "denominator {den} of a Mobius image cannot be told apart from 0"
            ))),
        }
    }

    /// `self ∘ o`.
    pub fn compose(&self, o: &Self) -> Self {
        Mobius::new(
            self.a.mul(&o.a).add(&self.b.mul(&o.c)),
            self.a.mul(&o.b).add(&self.b.mul(&o.d)),
            self.c.mul(&o.a).add(&self.d.mul(&o.c)),
            self.c.mul(&o.b).add(&self.d.mul(&o.d)),
        )
    }

    /// Adjugate matrix, which represents the inverse map.
    pub fn inverse(&self) -> Self {
        Mobius::new(self.d.clone(), self.b.neg(), self.c.neg(), self.a.clone())
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Mobius::identity(&self.a), |acc, _| acc.compose(self))
    }

    /// Projective equality: all 2x2 minors of the two coefficient vectors vanish.
    pub fn proj_eq(&self, o: &Self) -> Result<bool> {
        let u = [&self.a, &self.b, &self.c, &self.d];
        let w = [&o.a, &o.b, &o.c, &o.d];
        for i in 0..4 {
            for j in i + 1..4 {
                if !u[i].mul(w[j]).sub(&u[j].mul(w[i])).is_zero()? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn is_identity(&self) -> Result<bool> {
        self.proj_eq(&Mobius::identity(&self.a))
    }

    pub fn to_wire(&self) -> Value {
        json!([
            [self.a.to_wire(), self.b.to_wire()],
            [self.c.to_wire(), self.d.to_wire()]
        ])
    }
}

/// The order-`p` automorphism with fixed points `a`, `b` obtained by
/// conjugating z -> zeta*z by a map sending 0 to `a` and infinity to `b`.
pub fn order_p_fixing<F: Scalar>(
    a: &ProjPoint<F>,
    b: &ProjPoint<F>,
    zeta: &F,
) -> Result<Mobius<F>> {
    if a.same(b)? {
        return Err(Error::DegenerateFixedPoints);
    }
    let one = zeta.one();
    let zm1 = zeta.sub(&one);
    Ok(match (a, b) {
        (ProjPoint::Finite(a), ProjPoint::Finite(b)) => Mobius::new(
            b.mul(zeta).sub(a),
            a.mul(b).mul(&zm1).neg(),
            zm1,
            b.sub(&a.mul(zeta)),
        ),
        (ProjPoint::Finite(a), ProjPoint::Infinity) => {
            Mobius::new(zeta.clone(), a.mul(&zm1).neg(), zeta.zero(), one)
        }
        (ProjPoint::Infinity, ProjPoint::Finite(b)) => {
            Mobius::new(one, b.mul(&zm1), zeta.zero(), zeta.clone())
        }
        (ProjPoint::Infinity, ProjPoint::Infinity) => unreachable!(),
    })
}
