//! Fully connected tanh networks.
//!
//! Layers apply `z = tanh(W z + b)` except the last, which stays affine.
//! Parameters live in one flat vector laid out layer by layer, each layer
//! holding its weight matrix row-major followed by its biases. Evaluation
//! comes in three flavors: plain values, directional-expansion probes (value
//! plus derivatives up to order three along one space-time direction), and a
//! recording-tape forward pass for parameter gradients.

use crate::error::{Error, Result};
use crate::jet::raw::{compose, unary_derivs, UnaryOp, J4, ZERO4};
use crate::jet::Jet;
use crate::tape::{ParamSource, Tape};
use rand::Rng;

/// Network architecture plus the derived flat parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NetShape {
    widths: Vec<usize>,
    offsets: Vec<(usize, usize)>,
    param_count: usize,
}

impl NetShape {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Structural(format!(
                "network needs at least input and output layers, got widths {widths:?}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Structural(format!("zero layer width in {widths:?}")));
        }
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            let w_off = off;
            off += widths[l] * widths[l + 1];
            let b_off = off;
            off += widths[l + 1];
            offsets.push((w_off, b_off));
        }
        Ok(NetShape { widths, offsets, param_count: off })
    }

    /// `hidden` layers of equal `width` between `n_in` inputs and `n_out`
    /// outputs.
    pub fn rectangle(n_in: usize, hidden: usize, width: usize, n_out: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden + 2);
        widths.push(n_in);
        widths.extend(std::iter::repeat(width).take(hidden));
        widths.push(n_out);
        NetShape::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_in(&self) -> usize {
        self.widths[0]
    }

    pub fn n_out(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        self.offsets[layer]
    }
}

/// Reusable buffers for probe evaluation.
#[derive(Default)]
pub struct ProbeScratch {
    a: Vec<J4>,
    b: Vec<J4>,
}

#[derive(Clone, Debug)]
pub struct DenseNetwork {
    pub shape: NetShape,
    pub params: Vec<f64>,
}

impl DenseNetwork {
    pub fn zeros(shape: NetShape) -> Self {
        let params = vec![0.0; shape.param_count()];
        DenseNetwork { shape, params }
    }

    /// Glorot-uniform weight initialization with zero biases, drawing in
    /// canonical layer order from the supplied generator.
    pub fn glorot(shape: NetShape, rng: &mut impl Rng) -> Self {
        let mut net = DenseNetwork::zeros(shape);
        for l in 0..net.shape.layer_count() {
            let (n_in, n_out) = (net.shape.widths[l], net.shape.widths[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let (w_off, _) = net.shape.layer_offsets(l);
            for w in &mut net.params[w_off..w_off + n_in * n_out] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    /// Zero the final affine layer so the network output starts at exactly
    /// zero regardless of the hidden weights.
    pub fn zero_output_layer(&mut self) {
        let l = self.shape.layer_count() - 1;
        let (w_off, _) = self.shape.layer_offsets(l);
        let n = self.shape.widths[l] * self.shape.widths[l + 1] + self.shape.widths[l + 1];
        for p in &mut self.params[w_off..w_off + n] {
            *p = 0.0;
        }
    }

    pub fn eval(&self, input: &[f64], out: &mut Vec<f64>) -> Result<()> {
        eval_with(&self.shape, &self.params, input, out)
    }

    /// Directional derivatives along `dir` (one entry per input coordinate)
    /// up to `order <= 3`, one expansion per output component.
    pub fn probe(&self, input: &[f64], dir: &[f64], order: usize) -> Result<Vec<Jet>> {
        let mut scratch = ProbeScratch::default();
        let mut out = Vec::new();
        probe_with(&self.shape, &self.params, input, dir, order, &mut scratch, &mut out)?;
        Ok(out.into_iter().map(|c| Jet::from_coeffs(c)).collect())
    }

    pub fn probe_into(
        &self,
        input: &[f64],
        dir: &[f64],
        order: usize,
        scratch: &mut ProbeScratch,
        out: &mut Vec<J4>,
    ) -> Result<()> {
        probe_with(&self.shape, &self.params, input, dir, order, scratch, out)
    }

    /// Record a forward pass on the tape over already-pushed input nodes.
    /// Returns one node id per output component.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        source: ParamSource,
        inputs: &[u32],
    ) -> Result<Vec<u32>> {
        forward_on_tape_with(&self.shape, &self.params, tape, source, inputs)
    }

    /// Serialize as a versioned little-endian binary checkpoint: magic,
    /// width list, then parameters in canonical order.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + self.params.len() * 8);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(self.shape.widths.len() as u32).to_le_bytes());
        for &w in &self.shape.widths {
            bytes.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for &p in &self.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let fail = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(fail("bad magic"));
        }
        let mut at = MAGIC.len();
        let take_u32 = |at: &mut usize| -> Result<u32> {
            let b: [u8; 4] = bytes
                .get(*at..*at + 4)
                .ok_or_else(|| fail("truncated header"))?
                .try_into()
                .unwrap();
            *at += 4;
            Ok(u32::from_le_bytes(b))
        };
        let n_widths = take_u32(&mut at)? as usize;
        if n_widths < 2 || n_widths > 64 {
            return Err(fail("implausible layer count"));
        }
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            widths.push(take_u32(&mut at)? as usize);
        }
        let shape = NetShape::new(widths).map_err(|e| fail(&e.to_string()))?;
        let want = shape.param_count() * 8;
        if bytes.len() - at != want {
            return Err(fail(&format!(
                "parameter payload is {} bytes, expected {want}",
                bytes.len() - at
            )));
        }
        let mut params = Vec::with_capacity(shape.param_count());
        for chunk in bytes[at..].chunks_exact(8) {
            params.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(fail("non-finite parameter"));
        }
        Ok(DenseNetwork { shape, params })
    }
}

const MAGIC: &[u8] = b"EEMSNET1";

fn check_input(shape: &NetShape, input: &[f64], context: &'static str) -> Result<()> {
    if input.len() != shape.n_in() {
        return Err(Error::DimensionMismatch {
            context,
            expected: shape.n_in(),
            got: input.len(),
        });
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(Error::Structural(format!("non-finite input in {context}: {input:?}")));
    }
    Ok(())
}

/// Forward pass over any [`Real`] scalar. Slower than the specialized f64
/// and expansion paths, but composes with nested jets and dual numbers; the
/// accumulation order matches `eval_with` exactly so the f64 instantiation
/// is bitwise identical.
pub fn eval_generic<S: crate::real::Real>(
    shape: &NetShape,
    params: &[f64],
    input: &[S],
    out: &mut Vec<S>,
) -> Result<()> {
    if input.len() != shape.n_in() {
        return Err(Error::DimensionMismatch {
            context: "net_eval_generic",
            expected: shape.n_in(),
            got: input.len(),
        });
    }
    let mut cur: Vec<S> = input.to_vec();
    let mut next: Vec<S> = Vec::new();
    let last = shape.layer_count() - 1;
    for l in 0..=last {
        let (n_in, n_out) = (shape.widths[l], shape.widths[l + 1]);
        let (w_off, b_off) = shape.layer_offsets(l);
        next.clear();
        for i in 0..n_out {
            let row = &params[w_off + i * n_in..w_off + (i + 1) * n_in];
            let mut acc = cur[0].scale(0.0).shift(params[b_off + i]);
            for j in 0..n_in {
                acc = acc + cur[j].scale(row[j]);
            }
            next.push(if l < last { acc.tanh() } else { acc });
        }
        std::mem::swap(&mut cur, &mut next);
    }
    out.clear();
    out.extend_from_slice(&cur);
    Ok(())
}

pub fn eval_with(
    shape: &NetShape,
    params: &[f64],
    input: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    check_input(shape, input, "net_eval")?;
    let mut cur: Vec<f64> = input.to_vec();
    let mut next: Vec<f64> = Vec::new();
    let last = shape.layer_count() - 1;
    for l in 0..=last {
        let (n_in, n_out) = (shape.widths[l], shape.widths[l + 1]);
        let (w_off, b_off) = shape.layer_offsets(l);
        next.clear();
        for i in 0..n_out {
            let row = &params[w_off + i * n_in..w_off + (i + 1) * n_in];
            let mut acc = params[b_off + i];
            for j in 0..n_in {
                acc += row[j] * cur[j];
            }
            next.push(if l < last { acc.tanh() } else { acc });
        }
        std::mem::swap(&mut cur, &mut next);
    }
    out.clear();
    out.extend_from_slice(&cur);
    Ok(())
}

fn probe_with(
    shape: &NetShape,
    params: &[f64],
    input: &[f64],
    dir: &[f64],
    order: usize,
    scratch: &mut ProbeScratch,
    out: &mut Vec<J4>,
) -> Result<()> {
    if order > 3 {
        return Err(Error::UnsupportedOrder(order));
    }
    check_input(shape, input, "net_probe")?;
    if dir.len() != input.len() {
        return Err(Error::DimensionMismatch {
            context: "net_probe direction",
            expected: input.len(),
            got: dir.len(),
        });
    }
    let cur = &mut scratch.a;
    let next = &mut scratch.b;
    cur.clear();
    for (x, d) in input.iter().zip(dir) {
        let mut j = ZERO4;
        j[0] = *x;
        if order >= 1 {
            j[1] = *d;
        }
        cur.push(j);
    }
    let last = shape.layer_count() - 1;
    for l in 0..=last {
        let (n_in, n_out) = (shape.widths[l], shape.widths[l + 1]);
        let (w_off, b_off) = shape.layer_offsets(l);
        next.clear();
        for i in 0..n_out {
            let row = &params[w_off + i * n_in..w_off + (i + 1) * n_in];
            let mut acc = ZERO4;
            acc[0] = params[b_off + i];
            for j in 0..n_in {
                let w = row[j];
                for k in 0..=order {
                    acc[k] += w * cur[j][k];
                }
            }
            if l < last {
                let d = unary_derivs(UnaryOp::Tanh, acc[0]);
                acc = compose(&d, 0, &acc, order);
            }
            next.push(acc);
        }
        std::mem::swap(cur, next);
    }
    out.clear();
    out.extend_from_slice(cur);
    Ok(())
}

pub fn forward_on_tape_with(
    shape: &NetShape,
    params: &[f64],
    tape: &mut Tape,
    source: ParamSource,
    inputs: &[u32],
) -> Result<Vec<u32>> {
    if inputs.len() != shape.n_in() {
        return Err(Error::DimensionMismatch {
            context: "tape forward",
            expected: shape.n_in(),
            got: inputs.len(),
        });
    }
    let mut in0 = tape.contiguous(inputs);
    let last = shape.layer_count() - 1;
    for l in 0..=last {
        let (n_in, n_out) = (shape.widths[l], shape.widths[l + 1]);
        let (w_off, b_off) = shape.layer_offsets(l);
        let mut row0 = 0;
        for i in 0..n_out {
            let row = &params[w_off + i * n_in..w_off + (i + 1) * n_in];
            let id = tape.affine_row(
                in0,
                n_in,
                row,
                params[b_off + i],
                w_off + i * n_in,
                b_off + i,
                source,
            );
            if i == 0 {
                row0 = id;
            }
        }
        if l < last {
            let mut act0 = 0;
            for i in 0..n_out {
                let id = tape.unary(row0 + i as u32, UnaryOp::Tanh);
                if i == 0 {
                    act0 = id;
                }
            }
            in0 = act0;
        } else {
            in0 = row0;
        }
    }
    Ok((0..shape.n_out() as u32).map(|i| in0 + i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn test_net() -> DenseNetwork {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        DenseNetwork::glorot(NetShape::rectangle(2, 3, 8, 2).unwrap(), &mut rng)
    }

    #[test]
    fn param_layout_and_count() {
        let shape = NetShape::new(vec![2, 5, 3]).unwrap();
        assert_eq!(shape.param_count(), 2 * 5 + 5 + 5 * 3 + 3);
        assert_eq!(shape.layer_offsets(0), (0, 10));
        assert_eq!(shape.layer_offsets(1), (15, 30));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DenseNetwork::zeros(NetShape::rectangle(3, 2, 4, 1).unwrap());
        let mut out = Vec::new();
        net.eval(&[0.3, -0.7, 2.0], &mut out).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn probe_order_zero_matches_eval() {
        let net = test_net();
        let mut out = Vec::new();
        net.eval(&[0.4, -0.2], &mut out).unwrap();
        let jets = net.probe(&[0.4, -0.2], &[1.0, 0.0], 0).unwrap();
        assert_eq!(jets.len(), 2);
        for (j, v) in jets.iter().zip(&out) {
            assert_eq!(j.c[0], *v);
        }
    }

    #[test]
    fn directional_derivatives_match_finite_differences() {
        let net = test_net();
        let p = [0.37, -0.81];
        let dir = [0.6, 0.8];
        let jets = net.probe(&p, &dir, 3).unwrap();
        let f = |s: f64| -> Vec<f64> {
            let mut out = Vec::new();
            net.eval(&[p[0] + s * dir[0], p[1] + s * dir[1]], &mut out).unwrap();
            out
        };
        for comp in 0..2 {
            let h1 = 1e-6;
            let d1 = (f(h1)[comp] - f(-h1)[comp]) / (2.0 * h1);
            let h2 = 1e-4;
            let d2 = (f(h2)[comp] - 2.0 * f(0.0)[comp] + f(-h2)[comp]) / (h2 * h2);
            let h3 = 9e-4;
            let d3 = (f(2.0 * h3)[comp] - 2.0 * f(h3)[comp] + 2.0 * f(-h3)[comp]
                - f(-2.0 * h3)[comp])
                / (2.0 * h3 * h3 * h3);
            assert_relative_eq!(jets[comp].deriv(1), d1, max_relative = 1e-8, epsilon = 1e-10);
            assert_relative_eq!(jets[comp].deriv(2), d2, max_relative = 1e-5, epsilon = 1e-7);
            assert_relative_eq!(jets[comp].deriv(3), d3, max_relative = 1e-3, epsilon = 1e-5);
        }
    }

    #[test]
    fn unsupported_order_and_dimension_errors() {
        let net = test_net();
        assert!(matches!(
            net.probe(&[0.0, 0.0], &[1.0, 0.0], 4),
            Err(Error::UnsupportedOrder(4))
        ));
        assert!(matches!(
            net.probe(&[0.0], &[1.0], 2),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut out = Vec::new();
        assert!(net.eval(&[f64::NAN, 0.0], &mut out).is_err());
    }

    #[test]
    fn tape_forward_is_bitwise_identical_to_probe() {
        let net = test_net();
        let p = [0.1, 0.9];
        let dir = [1.0, -0.5];
        for order in 0..=3 {
            let jets = net.probe(&p, &dir, order).unwrap();
            let mut tape = Tape::new(order);
            let inputs: Vec<u32> = p
                .iter()
                .zip(&dir)
                .map(|(&x, &d)| {
                    let mut j = ZERO4;
                    j[0] = x;
                    if order >= 1 {
                        j[1] = d;
                    }
                    tape.constant(j)
                })
                .collect();
            let outs = net.forward_on_tape(&mut tape, ParamSource::Trainable, &inputs).unwrap();
            for (o, j) in outs.iter().zip(&jets) {
                assert_eq!(tape.val(*o), j.c);
            }
        }
    }

    #[test]
    fn tape_parameter_gradient_matches_finite_differences() {
        let net = test_net();
        let p = [0.25, -0.4];
        let dir = [1.0, 0.0];
        // Objective: sum over components of (second directional derivative).
        let eval = |params: &[f64]| -> f64 {
            let mut scratch = ProbeScratch::default();
            let mut out = Vec::new();
            probe_with(&net.shape, params, &p, &dir, 2, &mut scratch, &mut out).unwrap();
            out.iter().map(|j| 2.0 * j[2]).sum()
        };
        let mut tape = Tape::new(2);
        let inputs: Vec<u32> = p
            .iter()
            .zip(&dir)
            .map(|(&x, &d)| tape.constant([x, d, 0.0, 0.0]))
            .collect();
        let outs = net.forward_on_tape(&mut tape, ParamSource::Trainable, &inputs).unwrap();
        let d0 = tape.deriv(outs[0], 2);
        let d1 = tape.deriv(outs[1], 2);
        let obj = tape.add(d0, d1);
        let mut grad = vec![0.0; net.params.len()];
        let mut adj = Vec::new();
        tape.backward(obj, &net.params, &[], &mut grad, &mut adj);

        let mut params = net.params.clone();
        for idx in [0usize, 3, 17, 40, grad.len() - 1, grad.len() - 3] {
            let h = 1e-6;
            let orig = params[idx];
            params[idx] = orig + h;
            let fp = eval(&params);
            params[idx] = orig - h;
            let fm = eval(&params);
            params[idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(grad[idx], fd, max_relative = 2e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let net = test_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        net.save(&path).unwrap();
        let back = DenseNetwork::load(&path).unwrap();
        assert_eq!(net.shape, back.shape);
        assert_eq!(net.params, back.params);
        std::fs::write(&path, b"garbage").unwrap();
        assert!(DenseNetwork::load(&path).is_err());
    }
}
