//! Truncated directional Taylor expansions.
//!
//! A [`Jet`] stores the four coefficients `c0..c3` of a function's Taylor
//! expansion along one direction, i.e. value plus the first three directional
//! derivatives (stored as Taylor coefficients, `c_k = f^(k)/k!`). Arithmetic
//! follows the truncated polynomial ring: products are Cauchy convolutions cut
//! at order three, and analytic functions are applied by composing with their
//! Taylor polynomial around the leading coefficient.
//!
//! The coefficient type is generic so expansions can nest: `Jet<Dual>` carries
//! an extra first-order tangent, and `Jet<Jet>` yields mixed derivatives of a
//! closed-form expression.

use crate::real::Real;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Highest derivative order a jet can carry.
pub const MAX_ORDER: usize = 3;

const FACTORIAL: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<S = f64> {
    pub c: [S; 4],
}

impl Jet<f64> {
    pub fn constant(v: f64) -> Self {
        Jet { c: [v, 0.0, 0.0, 0.0] }
    }

    /// Expansion of the identity seeded with direction component `d`.
    pub fn variable(v: f64, d: f64) -> Self {
        Jet { c: [v, d, 0.0, 0.0] }
    }

    /// Raw derivative of order `k` (undoes the factorial scaling).
    pub fn deriv(&self, k: usize) -> f64 {
        self.c[k] * FACTORIAL[k]
    }
}

impl<S: Real> Jet<S> {
    pub fn from_coeffs(c: [S; 4]) -> Self {
        Jet { c }
    }

    /// Lift a scalar to a constant jet.
    pub fn lift(v: S) -> Self {
        let z = v.scale(0.0);
        Jet { c: [v, z, z, z] }
    }

    /// Lift a scalar to an identity expansion with direction component `d`.
    pub fn lift_dir(v: S, d: f64) -> Self {
        let z = v.scale(0.0);
        Jet { c: [v, z.shift(d), z, z] }
    }

    pub fn value_coeff(&self) -> S {
        self.c[0]
    }

    /// Derivative of the expansion with respect to its own variable:
    /// `[c1, 2 c2, 3 c3, 0]`.
    pub fn dstream(&self) -> Self {
        Jet {
            c: [self.c[1], self.c[2].scale(2.0), self.c[3].scale(3.0), self.c[0].scale(0.0)],
        }
    }

    /// Compose with an analytic function given by its derivatives
    /// `d = [f(u0), f'(u0), f''(u0), f'''(u0)]` at the leading coefficient.
    fn compose(&self, d: [S; 4]) -> Self {
        let u1 = self.c[1];
        let u2 = self.c[2];
        let u3 = self.c[3];
        Jet {
            c: [
                d[0],
                d[1] * u1,
                d[1] * u2 + (d[2] * u1 * u1).scale(0.5),
                d[1] * u3 + d[2] * u1 * u2 + (d[3] * u1 * u1 * u1).scale(1.0 / 6.0),
            ],
        }
    }
}

impl<S: Real> Add for Jet<S> {
    type Output = Jet<S>;
    fn add(self, o: Self) -> Self {
        Jet {
            c: [
                self.c[0] + o.c[0],
                self.c[1] + o.c[1],
                self.c[2] + o.c[2],
                self.c[3] + o.c[3],
            ],
        }
    }
}

impl<S: Real> Sub for Jet<S> {
    type Output = Jet<S>;
    fn sub(self, o: Self) -> Self {
        Jet {
            c: [
                self.c[0] - o.c[0],
                self.c[1] - o.c[1],
                self.c[2] - o.c[2],
                self.c[3] - o.c[3],
            ],
        }
    }
}

impl<S: Real> Mul for Jet<S> {
    type Output = Jet<S>;
    fn mul(self, o: Self) -> Self {
        let a = &self.c;
        let b = &o.c;
        Jet {
            c: [
                a[0] * b[0],
                a[0] * b[1] + a[1] * b[0],
                a[0] * b[2] + a[1] * b[1] + a[2] * b[0],
                a[0] * b[3] + a[1] * b[2] + a[2] * b[1] + a[3] * b[0],
            ],
        }
    }
}

impl<S: Real> Div for Jet<S> {
    type Output = Jet<S>;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<S: Real> Neg for Jet<S> {
    type Output = Jet<S>;
    fn neg(self) -> Self {
        Jet { c: [-self.c[0], -self.c[1], -self.c[2], -self.c[3]] }
    }
}

impl<S: Real> Real for Jet<S> {
    fn scale(self, k: f64) -> Self {
        Jet {
            c: [
                self.c[0].scale(k),
                self.c[1].scale(k),
                self.c[2].scale(k),
                self.c[3].scale(k),
            ],
        }
    }

    fn shift(self, k: f64) -> Self {
        let mut c = self.c;
        c[0] = c[0].shift(k);
        Jet { c }
    }

    fn recip(self) -> Self {
        let r = self.c[0].recip();
        let r2 = r * r;
        self.compose([r, -r2, (r2 * r).scale(2.0), -(r2 * r2).scale(6.0)])
    }

    fn sin(self) -> Self {
        let s = self.c[0].sin();
        let c = self.c[0].cos();
        self.compose([s, c, -s, -c])
    }

    fn cos(self) -> Self {
        let s = self.c[0].sin();
        let c = self.c[0].cos();
        self.compose([c, -s, -c, s])
    }

    fn tanh(self) -> Self {
        let t = self.c[0].tanh();
        let d1 = -(t * t).shift(-1.0); // 1 - t^2
        let d2 = (t * d1).scale(-2.0);
        let d3 = d1 * (t * t).scale(6.0).shift(-2.0);
        self.compose([t, d1, d2, d3])
    }

    fn sinh(self) -> Self {
        let sh = self.c[0].sinh();
        let ch = self.c[0].cosh();
        self.compose([sh, ch, sh, ch])
    }

    fn cosh(self) -> Self {
        let sh = self.c[0].sinh();
        let ch = self.c[0].cosh();
        self.compose([ch, sh, ch, sh])
    }

    fn exp(self) -> Self {
        let e = self.c[0].exp();
        self.compose([e, e, e, e])
    }

    fn sqrt(self) -> Self {
        let s = self.c[0].sqrt();
        let inv = s.recip();
        let inv3 = inv * inv * inv;
        self.compose([s, inv.scale(0.5), -inv3.scale(0.25), (inv3 * inv * inv).scale(0.375)])
    }

    fn atan(self) -> Self {
        let u = self.c[0];
        let q = (u * u).shift(1.0).recip();
        let q2 = q * q;
        let d2 = -(u * q2).scale(2.0);
        let d3 = q2 * q * (u * u).scale(6.0).shift(-2.0);
        self.compose([u.atan(), q, d2, d3])
    }

    fn value(&self) -> f64 {
        self.c[0].value()
    }
}

/// Unboxed expansion arithmetic with a runtime truncation order, shared by the
/// recording tape and the fast network probes.
pub mod raw {
    pub type J4 = [f64; 4];

    pub const ZERO4: J4 = [0.0; 4];

    pub const FACTORIAL: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

    #[derive(Clone, Copy, Debug)]
    pub enum UnaryOp {
        Tanh,
        Sin,
        Cos,
        Exp,
        Sinh,
        Cosh,
        Sqrt,
        Atan,
        Recip,
    }

    /// Derivatives 0..=4 of the function at `u`; the extra order serves the
    /// backward sweep, whose value sensitivities reach one order deeper.
    pub fn unary_derivs(op: UnaryOp, u: f64) -> [f64; 5] {
        match op {
            UnaryOp::Tanh => {
                let t = u.tanh();
                let d1 = 1.0 - t * t;
                [
                    t,
                    d1,
                    -2.0 * t * d1,
                    d1 * (6.0 * t * t - 2.0),
                    d1 * (16.0 * t - 24.0 * t * t * t),
                ]
            }
            UnaryOp::Sin => {
                let (s, c) = u.sin_cos();
                [s, c, -s, -c, s]
            }
            UnaryOp::Cos => {
                let (s, c) = u.sin_cos();
                [c, -s, -c, s, c]
            }
            UnaryOp::Exp => {
                let e = u.exp();
                [e; 5]
            }
            UnaryOp::Sinh => {
                let sh = u.sinh();
                let ch = u.cosh();
                [sh, ch, sh, ch, sh]
            }
            UnaryOp::Cosh => {
                let sh = u.sinh();
                let ch = u.cosh();
                [ch, sh, ch, sh, ch]
            }
            UnaryOp::Sqrt => {
                let s = u.sqrt();
                let i = 1.0 / s;
                let i3 = i * i * i;
                [s, 0.5 * i, -0.25 * i3, 0.375 * i3 * i * i, -0.9375 * i3 * i3 * i]
            }
            UnaryOp::Atan => {
                let q = 1.0 / (1.0 + u * u);
                let q2 = q * q;
                [
                    u.atan(),
                    q,
                    -2.0 * u * q2,
                    (6.0 * u * u - 2.0) * q2 * q,
                    24.0 * u * (1.0 - u * u) * q2 * q2,
                ]
            }
            UnaryOp::Recip => {
                let r = 1.0 / u;
                let r2 = r * r;
                [r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2, 24.0 * r2 * r2 * r]
            }
        }
    }

    /// Compose derivatives `d[k0..]` of an analytic function with expansion
    /// `u`, truncated at `order`.
    pub fn compose(d: &[f64; 5], k0: usize, u: &J4, order: usize) -> J4 {
        let mut out = ZERO4;
        out[0] = d[k0];
        if order >= 1 {
            out[1] = d[k0 + 1] * u[1];
        }
        if order >= 2 {
            out[2] = d[k0 + 1] * u[2] + 0.5 * d[k0 + 2] * u[1] * u[1];
        }
        if order >= 3 {
            out[3] = d[k0 + 1] * u[3]
                + d[k0 + 2] * u[1] * u[2]
                + d[k0 + 3] * u[1] * u[1] * u[1] / 6.0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn xjet(x: f64) -> Jet {
        Jet::variable(x, 1.0)
    }

    #[test]
    fn identity_derivatives() {
        let j = xjet(2.5);
        assert_eq!(j.deriv(0), 2.5);
        assert_eq!(j.deriv(1), 1.0);
        assert_eq!(j.deriv(2), 0.0);
        assert_eq!(j.deriv(3), 0.0);
    }

    #[test]
    fn tanh_at_zero() {
        // tanh'(0) = 1, tanh''(0) = 0, tanh'''(0) = -2
        let j = xjet(0.0).tanh();
        assert_eq!(j.deriv(0), 0.0);
        assert_relative_eq!(j.deriv(1), 1.0, max_relative = 1e-14);
        assert_relative_eq!(j.deriv(2), 0.0, epsilon = 1e-14);
        assert_relative_eq!(j.deriv(3), -2.0, max_relative = 1e-14);
    }

    #[test]
    fn product_matches_analytic_derivatives() {
        // h(x) = sin(x) exp(x); h''' = 2 exp(x)(cos x - sin x) ... derived below
        let x = 0.83;
        let h = xjet(x).sin() * xjet(x).exp();
        let (s, c, e) = (x.sin(), x.cos(), x.exp());
        assert_relative_eq!(h.deriv(0), s * e, max_relative = 1e-13);
        assert_relative_eq!(h.deriv(1), e * (s + c), max_relative = 1e-13);
        assert_relative_eq!(h.deriv(2), 2.0 * e * c, max_relative = 1e-13);
        assert_relative_eq!(h.deriv(3), 2.0 * e * (c - s), max_relative = 1e-13);
    }

    #[test]
    fn chain_matches_analytic_derivatives() {
        // h(x) = exp(sin x)
        let x = 0.41;
        let h = xjet(x).sin().exp();
        let (s, c) = (x.sin(), x.cos());
        let e = s.exp();
        assert_relative_eq!(h.deriv(1), e * c, max_relative = 1e-13);
        assert_relative_eq!(h.deriv(2), e * (c * c - s), max_relative = 1e-13);
        assert_relative_eq!(h.deriv(3), e * (c * c * c - 3.0 * s * c - c), max_relative = 1e-12);
    }

    #[test]
    fn quotient_matches_tangent_derivatives() {
        // tan' = sec^2, tan'' = 2 sec^2 tan, tan''' = 2 sec^2 (sec^2 + 2 tan^2)
        let x = 0.37;
        let h = xjet(x).sin() / xjet(x).cos();
        let t = x.tan();
        let sec2 = 1.0 + t * t;
        assert_relative_eq!(h.deriv(1), sec2, max_relative = 1e-12);
        assert_relative_eq!(h.deriv(2), 2.0 * sec2 * t, max_relative = 1e-12);
        assert_relative_eq!(h.deriv(3), 2.0 * sec2 * (sec2 + 2.0 * t * t), max_relative = 1e-12);
    }

    #[test]
    fn sqrt_and_atan_and_hyperbolic() {
        let x = 1.37;
        let h = xjet(x).sqrt();
        assert_relative_eq!(h.deriv(1), 0.5 / x.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(h.deriv(2), -0.25 * x.powf(-1.5), max_relative = 1e-13);
        assert_relative_eq!(h.deriv(3), 0.375 * x.powf(-2.5), max_relative = 1e-13);

        let a = xjet(0.6).atan();
        let u = 0.6;
        let q = 1.0 / (1.0 + u * u);
        assert_relative_eq!(a.deriv(1), q, max_relative = 1e-13);
        assert_relative_eq!(a.deriv(2), -2.0 * u * q * q, max_relative = 1e-13);
        assert_relative_eq!(a.deriv(3), (6.0 * u * u - 2.0) * q * q * q, max_relative = 1e-12);

        let s = xjet(0.9).sinh();
        assert_relative_eq!(s.deriv(2), 0.9f64.sinh(), max_relative = 1e-13);
        let c = xjet(0.9).cosh();
        assert_relative_eq!(c.deriv(3), 0.9f64.sinh(), max_relative = 1e-13);
    }

    #[test]
    fn nested_jets_give_mixed_derivatives() {
        // f(x, y) = sin(x y): mixed second derivative via Jet<Jet>.
        // Outer expansion in y, inner in x.
        let (x, y) = (0.7, 1.3);
        let xi: Jet<Jet> = Jet::lift(Jet::variable(x, 1.0));
        let yi: Jet<Jet> = Jet::lift_dir(Jet::constant(y), 1.0);
        let f = (xi * yi).sin();
        // d2f/dxdy = cos(xy) - xy sin(xy)
        let mixed = f.c[1].c[1]; // first order in y, first order in x
        let expect = (x * y).cos() - x * y * (x * y).sin();
        assert_relative_eq!(mixed, expect, max_relative = 1e-13);
    }

    #[test]
    fn dstream_shifts_coefficients() {
        let j = Jet::from_coeffs([1.0, 2.0, 3.0, 4.0]).dstream();
        assert_eq!(j.c, [2.0, 6.0, 12.0, 0.0]);
    }
}
