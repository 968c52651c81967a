//! Scalar abstraction for writing closed-form expressions once.
//!
//! Formulas written against [`Real`] can be evaluated with plain `f64`, with
//! truncated Taylor expansions ([`crate::jet::Jet`]) to obtain input
//! derivatives, or with recording tape variables ([`crate::tape::Var`]) to
//! obtain parameter gradients. Constants enter through [`Real::scale`] and
//! [`Real::shift`] so that no evaluation context is needed to build literals.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Multiply by a constant.
    fn scale(self, c: f64) -> Self;
    /// Add a constant.
    fn shift(self, c: f64) -> Self;
    fn recip(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn atan(self) -> Self;
    /// Leading (value) coefficient.
    fn value(&self) -> f64;
}

impl Real for f64 {
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn shift(self, c: f64) -> Self {
        self + c
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn value(&self) -> f64 {
        *self
    }
}

/// First-order forward dual number with a single tangent component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    pub fn seeded(v: f64, d: f64) -> Self {
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.v * o.d + self.d * o.v }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        self * o.recip()
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Real for Dual {
    fn scale(self, c: f64) -> Self {
        Dual { v: self.v * c, d: self.d * c }
    }
    fn shift(self, c: f64) -> Self {
        Dual { v: self.v + c, d: self.d }
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        Dual { v: r, d: -self.d * r * r }
    }
    fn sin(self) -> Self {
        Dual { v: self.v.sin(), d: self.d * self.v.cos() }
    }
    fn cos(self) -> Self {
        Dual { v: self.v.cos(), d: -self.d * self.v.sin() }
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        Dual { v: t, d: self.d * (1.0 - t * t) }
    }
    fn sinh(self) -> Self {
        Dual { v: self.v.sinh(), d: self.d * self.v.cosh() }
    }
    fn cosh(self) -> Self {
        Dual { v: self.v.cosh(), d: self.d * self.v.sinh() }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: self.d * e }
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual { v: s, d: self.d * 0.5 / s }
    }
    fn atan(self) -> Self {
        Dual { v: self.v.atan(), d: self.d / (1.0 + self.v * self.v) }
    }
    fn value(&self) -> f64 {
        self.v
    }
}
