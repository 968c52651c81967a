//! Reverse-mode differentiation over jet-valued computations.
//!
//! The tape records operations whose values are truncated Taylor expansions
//! (`[f64; 4]`, see [`crate::jet`]). A forward sweep happens eagerly as nodes
//! are pushed; [`Tape::backward`] then propagates coefficient-space adjoints in
//! reverse, accumulating gradients with respect to network parameters that
//! entered through affine nodes.
//!
//! Because expansions form a commutative ring, the adjoint of a ring product
//! is a correlation (transposed Cauchy convolution), and the adjoint of an
//! analytic function `f` is correlation with the expansion of `f'`. The input
//! value sensitivity of a composed analytic function reaches one derivative
//! order deeper than the carried expansion, so unary tables hold five
//! derivatives.
//!
//! The active truncation `order` is fixed per tape; coefficients above it are
//! never computed, which keeps low-order probes cheap.

use crate::jet::raw::{compose, unary_derivs, FACTORIAL};
pub use crate::jet::raw::{UnaryOp, J4, ZERO4};
use crate::real::Real;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Identifies which parameter vector an affine node reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamSource {
    /// The vector gradients are accumulated into.
    Trainable,
    /// Index into the frozen parameter slices passed to [`Tape::backward`].
    Frozen(u8),
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    Scale(u32, f64),
    Shift(u32),
    Unary(u32, UnaryOp),
    /// Raw derivative extraction: value `[k! c_k, 0, 0, 0]`.
    Deriv(u32, u8),
    /// `[base.c0, dir, 0, 0]` — start a fresh expansion at another node's value.
    Seed { base: u32 },
    /// `[a.c0, b.c0, 0, 0]` — assemble a first-order expansion from two scalars.
    Pair(u32, u32),
    /// Derivative with respect to the expansion variable: `[c1, 2c2, 3c3, 0]`.
    DStream(u32),
    /// One output row of `W x + b` over `n_in` consecutive input nodes.
    AffineRow { in0: u32, n_in: u32, w_off: u32, b_off: u32, source: ParamSource },
}

pub struct Tape {
    order: usize,
    nodes: Vec<Node>,
    vals: Vec<J4>,
}

impl Tape {
    pub fn new(order: usize) -> Self {
        assert!(order <= 3, "jet order above 3 is unsupported");
        Tape { order, nodes: Vec::new(), vals: Vec::new() }
    }

    /// Reset for reuse, keeping allocated capacity.
    pub fn reset(&mut self, order: usize) {
        assert!(order <= 3, "jet order above 3 is unsupported");
        self.order = order;
        self.nodes.clear();
        self.vals.clear();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn val(&self, id: u32) -> J4 {
        self.vals[id as usize]
    }

    pub fn value(&self, id: u32) -> f64 {
        self.vals[id as usize][0]
    }

    fn push(&mut self, node: Node, val: J4) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.vals.push(val);
        id
    }

    pub fn constant(&mut self, val: J4) -> u32 {
        self.push(Node::Const, val)
    }

    pub fn scalar(&mut self, v: f64) -> u32 {
        self.constant([v, 0.0, 0.0, 0.0])
    }

    pub fn add(&mut self, a: u32, b: u32) -> u32 {
        let mut v = ZERO4;
        for k in 0..=self.order {
            v[k] = self.vals[a as usize][k] + self.vals[b as usize][k];
        }
        self.push(Node::Add(a, b), v)
    }

    pub fn sub(&mut self, a: u32, b: u32) -> u32 {
        let mut v = ZERO4;
        for k in 0..=self.order {
            v[k] = self.vals[a as usize][k] - self.vals[b as usize][k];
        }
        self.push(Node::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: u32, b: u32) -> u32 {
        let x = &self.vals[a as usize];
        let y = &self.vals[b as usize];
        let mut v = ZERO4;
        for k in 0..=self.order {
            let mut acc = 0.0;
            for i in 0..=k {
                acc += x[i] * y[k - i];
            }
            v[k] = acc;
        }
        self.push(Node::Mul(a, b), v)
    }

    pub fn neg(&mut self, a: u32) -> u32 {
        let mut v = ZERO4;
        for k in 0..=self.order {
            v[k] = -self.vals[a as usize][k];
        }
        self.push(Node::Neg(a), v)
    }

    pub fn scale(&mut self, a: u32, c: f64) -> u32 {
        let mut v = ZERO4;
        for k in 0..=self.order {
            v[k] = c * self.vals[a as usize][k];
        }
        self.push(Node::Scale(a, c), v)
    }

    pub fn shift(&mut self, a: u32, c: f64) -> u32 {
        let mut v = self.vals[a as usize];
        v[0] += c;
        self.push(Node::Shift(a), v)
    }

    pub fn unary(&mut self, a: u32, op: UnaryOp) -> u32 {
        let d = unary_derivs(op, self.vals[a as usize][0]);
        let v = compose(&d, 0, &self.vals[a as usize], self.order);
        self.push(Node::Unary(a, op), v)
    }

    pub fn deriv(&mut self, a: u32, k: usize) -> u32 {
        assert!(k <= self.order, "derivative order exceeds tape order");
        let v = [FACTORIAL[k] * self.vals[a as usize][k], 0.0, 0.0, 0.0];
        self.push(Node::Deriv(a, k as u8), v)
    }

    pub fn seed(&mut self, base: u32, dir: f64) -> u32 {
        let v = [self.vals[base as usize][0], dir, 0.0, 0.0];
        self.push(Node::Seed { base }, v)
    }

    pub fn pair(&mut self, a: u32, b: u32) -> u32 {
        let v = [self.vals[a as usize][0], self.vals[b as usize][0], 0.0, 0.0];
        self.push(Node::Pair(a, b), v)
    }

    pub fn dstream(&mut self, a: u32) -> u32 {
        let x = &self.vals[a as usize];
        let v = [x[1], 2.0 * x[2], 3.0 * x[3], 0.0];
        self.push(Node::DStream(a), v)
    }

    /// One affine output row `sum_j w[j] x_j + b` over consecutive inputs
    /// `in0..in0 + n_in`. `w` and `b` are the row slice and bias value;
    /// `w_off`/`b_off` locate them inside the source vector for the backward
    /// sweep.
    pub fn affine_row(
        &mut self,
        in0: u32,
        n_in: usize,
        w: &[f64],
        b: f64,
        w_off: usize,
        b_off: usize,
        source: ParamSource,
    ) -> u32 {
        debug_assert_eq!(w.len(), n_in);
        let mut v = ZERO4;
        v[0] = b;
        for j in 0..n_in {
            let x = &self.vals[(in0 + j as u32) as usize];
            let wj = w[j];
            for k in 0..=self.order {
                v[k] += wj * x[k];
            }
        }
        self.push(
            Node::AffineRow {
                in0,
                n_in: n_in as u32,
                w_off: w_off as u32,
                b_off: b_off as u32,
                source,
            },
            v,
        )
    }

    /// Copy nodes so that the given ids become consecutive. Returns the start
    /// id of the consecutive block.
    pub fn contiguous(&mut self, ids: &[u32]) -> u32 {
        let consecutive = ids.windows(2).all(|w| w[1] == w[0] + 1);
        if consecutive && !ids.is_empty() {
            return ids[0];
        }
        let start = self.nodes.len() as u32;
        for &id in ids {
            let v = self.vals[id as usize];
            self.push(Node::Scale(id, 1.0), v);
        }
        start
    }

    /// Reverse sweep from `seed_node` (seeded with adjoint `[1, 0, 0, 0]`).
    /// Parameter gradients accumulate into `grad`, which must match the
    /// trainable vector length. `frozen` supplies parameter slices for
    /// `ParamSource::Frozen` affine nodes.
    pub fn backward(
        &self,
        seed_node: u32,
        trainable: &[f64],
        frozen: &[&[f64]],
        grad: &mut [f64],
        adj: &mut Vec<J4>,
    ) {
        let n = self.nodes.len();
        adj.clear();
        adj.resize(n, ZERO4);
        adj[seed_node as usize][0] = 1.0;
        let ord = self.order;
        for i in (0..n).rev() {
            let a_bar = adj[i];
            if a_bar == ZERO4 {
                continue;
            }
            match self.nodes[i] {
                Node::Const => {}
                Node::Add(a, b) => {
                    for k in 0..=ord {
                        adj[a as usize][k] += a_bar[k];
                        adj[b as usize][k] += a_bar[k];
                    }
                }
                Node::Sub(a, b) => {
                    for k in 0..=ord {
                        adj[a as usize][k] += a_bar[k];
                        adj[b as usize][k] -= a_bar[k];
                    }
                }
                Node::Mul(a, b) => {
                    let x = self.vals[a as usize];
                    let y = self.vals[b as usize];
                    for j in 0..=ord {
                        let mut ax = 0.0;
                        let mut bx = 0.0;
                        for k in j..=ord {
                            ax += a_bar[k] * y[k - j];
                            bx += a_bar[k] * x[k - j];
                        }
                        adj[a as usize][j] += ax;
                        adj[b as usize][j] += bx;
                    }
                }
                Node::Neg(a) => {
                    for k in 0..=ord {
                        adj[a as usize][k] -= a_bar[k];
                    }
                }
                Node::Scale(a, c) => {
                    for k in 0..=ord {
                        adj[a as usize][k] += c * a_bar[k];
                    }
                }
                Node::Shift(a) => {
                    for k in 0..=ord {
                        adj[a as usize][k] += a_bar[k];
                    }
                }
                Node::Unary(a, op) => {
                    let u = self.vals[a as usize];
                    let d = unary_derivs(op, u[0]);
                    // Expansion of f'(u); the adjoint of ring composition is
                    // correlation with it.
                    let g = compose(&d, 1, &u, ord);
                    for j in 0..=ord {
                        let mut acc = 0.0;
                        for k in j..=ord {
                            acc += a_bar[k] * g[k - j];
                        }
                        adj[a as usize][j] += acc;
                    }
                }
                Node::Deriv(a, k) => {
                    adj[a as usize][k as usize] += FACTORIAL[k as usize] * a_bar[0];
                }
                Node::Seed { base } => {
                    adj[base as usize][0] += a_bar[0];
                }
                Node::Pair(a, b) => {
                    adj[a as usize][0] += a_bar[0];
                    adj[b as usize][0] += a_bar[1];
                }
                Node::DStream(a) => {
                    adj[a as usize][1] += a_bar[0];
                    if ord >= 2 {
                        adj[a as usize][2] += 2.0 * a_bar[1];
                    }
                    if ord >= 3 {
                        adj[a as usize][3] += 3.0 * a_bar[2];
                    }
                }
                Node::AffineRow { in0, n_in, w_off, b_off, source } => {
                    let w = match source {
                        ParamSource::Trainable => {
                            &trainable[w_off as usize..w_off as usize + n_in as usize]
                        }
                        ParamSource::Frozen(f) => {
                            &frozen[f as usize][w_off as usize..w_off as usize + n_in as usize]
                        }
                    };
                    for j in 0..n_in as usize {
                        let x_id = (in0 + j as u32) as usize;
                        for k in 0..=ord {
                            adj[x_id][k] += w[j] * a_bar[k];
                        }
                    }
                    if source == ParamSource::Trainable {
                        for j in 0..n_in as usize {
                            let x = self.vals[(in0 + j as u32) as usize];
                            let mut acc = 0.0;
                            for k in 0..=ord {
                                acc += a_bar[k] * x[k];
                            }
                            grad[w_off as usize + j] += acc;
                        }
                        grad[b_off as usize] += a_bar[0];
                    }
                }
            }
        }
    }
}

/// Shared-cell wrapper so that [`Var`] handles can record through `&self`.
pub struct TapeCell(pub RefCell<Tape>);

impl TapeCell {
    pub fn new(order: usize) -> Self {
        TapeCell(RefCell::new(Tape::new(order)))
    }

    pub fn var(&self, id: u32) -> Var<'_> {
        Var { cell: self, id }
    }

    pub fn constant(&self, v: f64) -> Var<'_> {
        let id = self.0.borrow_mut().scalar(v);
        self.var(id)
    }

    pub fn constant_jet(&self, j: J4) -> Var<'_> {
        let id = self.0.borrow_mut().constant(j);
        self.var(id)
    }
}

/// Handle to a tape node; implements [`Real`] with ring-of-expansions
/// semantics so generic formulas can be recorded.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    cell: &'t TapeCell,
    pub id: u32,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}={:?}", self.id, self.cell.0.borrow().val(self.id))
    }
}

impl<'t> Var<'t> {
    fn apply(self, f: impl FnOnce(&mut Tape) -> u32) -> Var<'t> {
        let id = f(&mut self.cell.0.borrow_mut());
        Var { cell: self.cell, id }
    }

    pub fn jet(&self) -> J4 {
        self.cell.0.borrow().val(self.id)
    }

    pub fn deriv(self, k: usize) -> Var<'t> {
        self.apply(|t| t.deriv(self.id, k))
    }

    pub fn dstream(self) -> Var<'t> {
        self.apply(|t| t.dstream(self.id))
    }

    pub fn pair(self, second: Var<'t>) -> Var<'t> {
        self.apply(|t| t.pair(self.id, second.id))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Self) -> Self {
        self.apply(|t| t.add(self.id, o.id))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Self) -> Self {
        self.apply(|t| t.sub(self.id, o.id))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Self) -> Self {
        self.apply(|t| t.mul(self.id, o.id))
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Self) -> Self {
        let r = o.recip();
        self * r
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.apply(|t| t.neg(self.id))
    }
}

impl<'t> Real for Var<'t> {
    fn scale(self, c: f64) -> Self {
        self.apply(|t| t.scale(self.id, c))
    }
    fn shift(self, c: f64) -> Self {
        self.apply(|t| t.shift(self.id, c))
    }
    fn recip(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Recip))
    }
    fn sin(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Sin))
    }
    fn cos(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Cos))
    }
    fn tanh(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Tanh))
    }
    fn sinh(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Sinh))
    }
    fn cosh(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Cosh))
    }
    fn exp(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Exp))
    }
    fn sqrt(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Sqrt))
    }
    fn atan(self) -> Self {
        self.apply(|t| t.unary(self.id, UnaryOp::Atan))
    }
    fn value(&self) -> f64 {
        self.cell.0.borrow().value(self.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn squared_affine_output_gradient() {
        // Single weight theta = 1 (plus a bias slot), input x0 = 2,
        // loss = (theta * x0)^2; dL/dtheta = 2 * theta * x0^2 = 8.
        let params = [1.0f64, 0.0];
        let mut tape = Tape::new(0);
        let x = tape.scalar(2.0);
        let y = tape.affine_row(x, 1, &params[..1], params[1], 0, 1, ParamSource::Trainable);
        let loss = tape.mul(y, y);
        let mut grad = vec![0.0; 2];
        let mut adj = Vec::new();
        tape.backward(loss, &params, &[], &mut grad, &mut adj);
        assert_relative_eq!(tape.value(loss), 4.0, max_relative = 1e-14);
        assert_relative_eq!(grad[0], 8.0, max_relative = 1e-14);
    }

    #[test]
    fn derivative_extraction_gradient_matches_finite_differences() {
        // f(w) = d/dx tanh(w * x) at x = 0.7, differentiated with respect to w.
        let run = |w: f64| -> (f64, f64) {
            let params = [w, 0.0];
            let mut tape = Tape::new(1);
            let x = tape.constant([0.7, 1.0, 0.0, 0.0]);
            let a = tape.affine_row(x, 1, &params[..1], 0.0, 0, 1, ParamSource::Trainable);
            let h = tape.unary(a, UnaryOp::Tanh);
            let d = tape.deriv(h, 1);
            let mut grad = vec![0.0; 2];
            let mut adj = Vec::new();
            tape.backward(d, &params, &[], &mut grad, &mut adj);
            (tape.value(d), grad[0])
        };
        let (_, g) = run(0.9);
        let h = 1e-6;
        let (fp, _) = run(0.9 + h);
        let (fm, _) = run(0.9 - h);
        let fd = (fp - fm) / (2.0 * h);
        assert_relative_eq!(g, fd, max_relative = 1e-8);
    }

    #[test]
    fn third_order_unary_chain_gradient() {
        // f(w) = d^3/dx^3 sin(w * x) at x = 0.3; analytic: derivative of
        // -w^3 cos(w x) with respect to w.
        let run = |w: f64| -> (f64, f64) {
            let params = [w, 0.0];
            let mut tape = Tape::new(3);
            let x = tape.constant([0.3, 1.0, 0.0, 0.0]);
            let a = tape.affine_row(x, 1, &params[..1], 0.0, 0, 1, ParamSource::Trainable);
            let s = tape.unary(a, UnaryOp::Sin);
            let d3 = tape.deriv(s, 3);
            let mut grad = vec![0.0; 2];
            let mut adj = Vec::new();
            tape.backward(d3, &params, &[], &mut grad, &mut adj);
            (tape.value(d3), grad[0])
        };
        let w = 1.7;
        let x = 0.3;
        let (val, g) = run(w);
        assert_relative_eq!(val, -w * w * w * (w * x).cos(), max_relative = 1e-12);
        let analytic = -3.0 * w * w * (w * x).cos() + w * w * w * x * (w * x).sin();
        assert_relative_eq!(g, analytic, max_relative = 1e-12);
    }

    #[test]
    fn ring_ops_through_vars_match_plain_jets() {
        use crate::jet::Jet;
        let cell = TapeCell::new(3);
        let x = cell.constant_jet([0.4, 1.0, 0.0, 0.0]);
        let y = (x.sin() * x.exp()).sqrt();
        let j = (Jet::variable(0.4, 1.0).sin() * Jet::variable(0.4, 1.0).exp()).sqrt();
        let v = y.jet();
        for k in 0..4 {
            assert_relative_eq!(v[k], j.c[k], max_relative = 1e-13);
        }
    }

    #[test]
    fn frozen_affine_rows_receive_no_gradient() {
        let frozen_params = [2.0f64, 0.5];
        let train_params = [3.0f64, 0.0];
        let mut tape = Tape::new(0);
        let x = tape.scalar(1.5);
        let hidden =
            tape.affine_row(x, 1, &frozen_params[..1], frozen_params[1], 0, 1, ParamSource::Frozen(0));
        let out = tape.affine_row(hidden, 1, &train_params[..1], 0.0, 0, 1, ParamSource::Trainable);
        let loss = tape.mul(out, out);
        let mut grad = vec![0.0; 2];
        let mut adj = Vec::new();
        tape.backward(loss, &train_params, &[&frozen_params], &mut grad, &mut adj);
        // value: ((2*1.5+0.5)*3)^2 = 10.5^2. The trainable weight gradient is
        // 2*10.5*3.5 = 73.5 and the trainable bias gradient is 2*10.5 = 21.
        // Were the frozen row leaking into the shared offsets, grad[0] would
        // also pick up d loss/d frozen_w = 2*10.5*3*1.5 = 94.5.
        assert_relative_eq!(tape.value(loss), 110.25, max_relative = 1e-14);
        assert_relative_eq!(grad[0], 73.5, max_relative = 1e-13);
        assert_relative_eq!(grad[1], 21.0, max_relative = 1e-13);
    }
}
