//! Collocation loss assembly and the optimizers that minimize it.
//!
//! The training loss is a weighted sum of mean squared residuals over three
//! point categories: interior equation residuals, boundary-condition
//! residuals, and initial-condition residuals.  Two evaluation routes exist
//! and are pinned together by tests:
//!
//! * a value-only route that drives the network through directional
//!   expansion probes (used for line searches and diagnostics), and
//! * a recording route that replays the same arithmetic on the operation
//!   tape to obtain the exact parameter gradient in one reverse sweep.
//!
//! Reductions are chunked at a fixed width and combined in chunk order, so
//! results are bit-identical regardless of thread count.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{residual_at, FieldSource, NetSource};
use crate::network::{forward_on_tape_with, DenseNetwork, NetShape};
use crate::problems::{BoundaryKind, CompDerivs, PointDerivs, ProbeDir, ProblemSpec};
use crate::real::Real;
use crate::sampling::PointSet;
use crate::tape::{ParamSource, TapeCell, Var};

/// Fixed reduction width; sums are combined per chunk, then across chunks in
/// index order, which makes parallel evaluation deterministic.
pub const CHUNK: usize = 64;

/// Per-term weights for the training loss.  Interior and initial terms carry
/// one weight per solution component (the second entry is ignored for
/// scalar problems).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub interior: [f64; 2],
    pub boundary: f64,
    pub initial: [f64; 2],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { interior: [1.0, 1.0], boundary: 1.0, initial: [1.0, 1.0] }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.interior[0],
            self.interior[1],
            self.boundary,
            self.initial[0],
            self.initial[1],
        ];
        if all.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Config(format!("loss weights must be positive and finite: {self:?}")));
        }
        Ok(())
    }
}

/// Unweighted per-term mean squared residuals plus the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean squared interior residual per component.
    pub interior: [f64; 2],
    /// Mean squared boundary residual (all boundary residual instances).
    pub boundary: f64,
    /// Mean squared initial residual per component (value, then velocity).
    pub initial: [f64; 2],
}

/// Deterministic chunked accumulator: partial sums of width [`CHUNK`] are
/// folded into the running total in order.
#[derive(Clone, Copy, Default)]
struct ChunkSum {
    total: f64,
    chunk: f64,
    filled: usize,
    count: usize,
}

impl ChunkSum {
    fn push(&mut self, v: f64) {
        self.chunk += v;
        self.filled += 1;
        self.count += 1;
        if self.filled == CHUNK {
            self.total += self.chunk;
            self.chunk = 0.0;
            self.filled = 0;
        }
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.total + self.chunk) / self.count as f64
    }
}

fn check_points(spec: &ProblemSpec, points: &PointSet) -> Result<()> {
    if points.dim != spec.dim {
        return Err(Error::DimensionMismatch {
            context: "point set dimension",
            expected: spec.dim,
            got: points.dim,
        });
    }
    for (n, what) in [
        (points.n_interior(), "interior"),
        (points.n_initial(), "initial"),
        (points.n_boundary(), "boundary"),
    ] {
        if n == 0 {
            return Err(Error::Structural(format!(
                "loss term `{what}` has positive weight but no collocation points"
            )));
        }
    }
    if spec.boundary == BoundaryKind::Periodic && spec.dim != 1 {
        return Err(Error::Structural(
            "periodic boundary pairing is implemented for one spatial dimension".into(),
        ));
    }
    Ok(())
}

/// Training loss of an arbitrary field source over a collocation set.
///
/// Boundary terms follow the boundary kind: Dirichlet penalizes the value
/// mismatch, Neumann the face-axis first derivative mismatch, and periodic
/// problems penalize both the value gap and the first-derivative gap between
/// the two walls at each boundary time sample.  Initial terms penalize the
/// value of each component against the initial data.
pub fn pinn_loss(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    points: &PointSet,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    check_points(spec, points)?;

    let m = spec.components;
    let mut interior = [ChunkSum::default(), ChunkSum::default()];
    let mut residuals = Vec::with_capacity(m);
    for i in 0..points.n_interior() {
        let (x, t) = points.interior_point(i);
        residual_at(spec, src, x, t, &mut residuals)?;
        for (c, r) in residuals.iter().enumerate() {
            interior[c].push(r * r);
        }
    }

    let mut boundary = ChunkSum::default();
    for i in 0..points.n_boundary() {
        let (x, t, face) = points.boundary_point(i);
        match spec.boundary {
            BoundaryKind::Dirichlet => {
                let jets = src.probe(x, t, ProbeDir::T, 0)?;
                let r = jets[0].c[0] - spec.dirichlet_value(x, t);
                boundary.push(r * r);
            }
            BoundaryKind::Neumann => {
                let jets = src.probe(x, t, ProbeDir::X(face.axis), 1)?;
                let r = jets[0].deriv(1) - spec.neumann_value(face, x, t);
                boundary.push(r * r);
            }
            BoundaryKind::Periodic => {
                let lo = [spec.domain.lo[0]];
                let hi = [spec.domain.hi[0]];
                let ja = src.probe(&lo, t, ProbeDir::X(0), 1)?;
                let jb = src.probe(&hi, t, ProbeDir::X(0), 1)?;
                let rv = ja[0].c[0] - jb[0].c[0];
                let rd = ja[0].deriv(1) - jb[0].deriv(1);
                boundary.push(rv * rv);
                boundary.push(rd * rd);
            }
        }
    }

    let mut initial = [ChunkSum::default(), ChunkSum::default()];
    for i in 0..points.n_initial() {
        let (x, t) = points.initial_point(i);
        let jets = src.probe(x, t, ProbeDir::T, 0)?;
        let ru = jets[0].c[0] - spec.initial_u(x);
        initial[0].push(ru * ru);
        if m == 2 {
            let rv = jets[1].c[0] - spec.initial_v(x).expect("wave system has initial velocity");
            initial[1].push(rv * rv);
        }
    }

    let mut out = LossBreakdown::default();
    for c in 0..m {
        out.interior[c] = interior[c].mean();
        out.initial[c] = initial[c].mean();
        out.total += weights.interior[c] * out.interior[c] + weights.initial[c] * out.initial[c];
    }
    out.boundary = boundary.mean();
    out.total += weights.boundary * out.boundary;
    if !out.total.is_finite() {
        return Err(Error::NonFinite { term: format!("{} loss", spec.name), index: 0 });
    }
    Ok(out)
}

/// An objective with exact gradients, the contract both optimizers consume.
/// Column names for the per-term means of the collocation loss, matching the
/// order produced by `PinnLoss::last_terms`.
pub fn loss_term_names(components: usize) -> Vec<&'static str> {
    if components == 2 {
        vec!["interior_u", "interior_v", "boundary", "initial_u", "initial_v"]
    } else {
        vec!["interior", "boundary", "initial"]
    }
}

pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&mut self, params: &[f64]) -> Result<f64>;
    /// Writes the full gradient into `grad` and returns the loss value.
    fn value_grad(&mut self, params: &[f64], grad: &mut [f64]) -> Result<f64>;
    /// Names of the per-term means reported by `last_terms`, when any.
    fn term_names(&self) -> Vec<&'static str> {
        Vec::new()
    }
    /// Unweighted per-term means at the most recent evaluation.
    fn last_terms(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// The training loss of a dense network on a fixed problem and point set.
///
/// `value` drives the expansion-probe route; `value_grad` records the same
/// arithmetic on the tape and reverse-sweeps it, so the two agree to
/// round-off and the gradient is exact for the evaluated loss.
pub struct PinnLoss<'a> {
    spec: &'a ProblemSpec,
    points: &'a PointSet,
    weights: LossWeights,
    scratch: DenseNetwork,
    /// Unweighted per-term means from the most recent evaluation, in the
    /// fixed slot order: interior components, boundary, initial components.
    last: [f64; 5],
}

impl<'a> PinnLoss<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        shape: &NetShape,
        points: &'a PointSet,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        check_points(spec, points)?;
        if shape.n_in() != spec.dim + 1 {
            return Err(Error::DimensionMismatch {
                context: "network inputs vs problem coordinates",
                expected: spec.dim + 1,
                got: shape.n_in(),
            });
        }
        if shape.n_out() != spec.components {
            return Err(Error::DimensionMismatch {
                context: "network outputs vs solution components",
                expected: spec.components,
                got: shape.n_out(),
            });
        }
        Ok(PinnLoss {
            spec,
            points,
            weights,
            scratch: DenseNetwork::zeros(shape.clone()),
            last: [0.0; 5],
        })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    fn load_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.scratch.params.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.scratch.params.len(),
                got: params.len(),
            });
        }
        self.scratch.params.copy_from_slice(params);
        Ok(())
    }

    /// Per-term loss breakdown at the given parameters (probe route).
    pub fn breakdown(&mut self, params: &[f64]) -> Result<LossBreakdown> {
        self.load_params(params)?;
        pinn_loss(self.spec, &NetSource { net: &self.scratch }, self.points, &self.weights)
    }

    /// Loss and exact gradient via one tape recording per point chunk.
    pub fn loss_grad(&mut self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.load_params(params)?;
        let n_params = self.scratch.params.len();
        if grad.len() != n_params {
            return Err(Error::DimensionMismatch {
                context: "gradient buffer",
                expected: n_params,
                got: grad.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = 0.0);

        let interior_order =
            self.spec.interior_probes().iter().map(|&(_, o)| o).max().unwrap_or(1);
        let n_int = self.points.n_interior();
        let n_bnd = self.points.n_boundary();
        let n_ini = self.points.n_initial();

        // Periodic walls contribute two residual instances per time sample.
        let bnd_count = match self.spec.boundary {
            BoundaryKind::Periodic => 2 * n_bnd,
            _ => n_bnd,
        };

        // Chunk descriptors: (section, first point, count, tape order).
        #[derive(Clone, Copy)]
        enum Section {
            Interior,
            Boundary,
            Initial,
        }
        let mut chunks: Vec<(Section, usize, usize, usize)> = Vec::new();
        let mut push_chunks = |section: Section, n: usize, order: usize| {
            let mut at = 0;
            while at < n {
                let len = CHUNK.min(n - at);
                chunks.push((section, at, len, order));
                at += len;
            }
        };
        push_chunks(Section::Interior, n_int, interior_order);
        push_chunks(Section::Boundary, n_bnd, 1);
        push_chunks(Section::Initial, n_ini, 0);

        let spec = self.spec;
        let points = self.points;
        let weights = &self.weights;
        let net = &self.scratch;

        // Term weights in the fixed slot order used by `last`:
        // interior components, boundary, initial components.
        let lambda = [
            weights.interior[0],
            weights.interior[1],
            weights.boundary,
            weights.initial[0],
            weights.initial[1],
        ];

        let record_chunk = |&(section, first, len, order): &(Section, usize, usize, usize)|
         -> Result<(f64, [f64; 5], Vec<f64>)> {
            let cell = TapeCell::new(order);
            // One accumulator per loss term; the weighted total is assembled
            // at the end so unweighted per-term means fall out for free.
            let mut accs: [Option<Var<'_>>; 5] = [None; 5];
            fn add<'t>(accs: &mut [Option<Var<'t>>; 5], slot: usize, term: Var<'t>) {
                accs[slot] = Some(match accs[slot] {
                    None => term,
                    Some(a) => a + term,
                });
            }
            let mut residuals: Vec<Var<'_>> = Vec::new();
            for i in first..first + len {
                match section {
                    Section::Interior => {
                        let (x, t) = points.interior_point(i);
                        let derivs = record_point_derivs(&cell, net, spec, x, t)?;
                        spec.interior_residual_into(x, t, &derivs, &mut residuals);
                        for (c, r) in residuals.iter().enumerate() {
                            let term = (*r * *r).scale(1.0 / n_int as f64);
                            add(&mut accs, c, term);
                        }
                    }
                    Section::Boundary => {
                        let (x, t, face) = points.boundary_point(i);
                        let w = 1.0 / bnd_count as f64;
                        match spec.boundary {
                            BoundaryKind::Dirichlet => {
                                let outs = record_forward(&cell, net, x, t, None)?;
                                let r = outs[0].deriv(0).shift(-spec.dirichlet_value(x, t));
                                add(&mut accs, 2, (r * r).scale(w));
                            }
                            BoundaryKind::Neumann => {
                                let outs =
                                    record_forward(&cell, net, x, t, Some(face.axis))?;
                                let r =
                                    outs[0].deriv(1).shift(-spec.neumann_value(face, x, t));
                                add(&mut accs, 2, (r * r).scale(w));
                            }
                            BoundaryKind::Periodic => {
                                let lo = [spec.domain.lo[0]];
                                let hi = [spec.domain.hi[0]];
                                let oa = record_forward(&cell, net, &lo, t, Some(0))?;
                                let ob = record_forward(&cell, net, &hi, t, Some(0))?;
                                let rv = oa[0].deriv(0) - ob[0].deriv(0);
                                let rd = oa[0].deriv(1) - ob[0].deriv(1);
                                add(&mut accs, 2, (rv * rv).scale(w) + (rd * rd).scale(w));
                            }
                        }
                    }
                    Section::Initial => {
                        let (x, t) = points.initial_point(i);
                        let outs = record_forward(&cell, net, x, t, None)?;
                        let ru = outs[0].deriv(0).shift(-spec.initial_u(x));
                        add(&mut accs, 3, (ru * ru).scale(1.0 / n_ini as f64));
                        if spec.components == 2 {
                            let rv = outs[1].deriv(0).shift(
                                -spec.initial_v(x).expect("wave system has initial velocity"),
                            );
                            add(&mut accs, 4, (rv * rv).scale(1.0 / n_ini as f64));
                        }
                    }
                }
            }
            let mut term_sums = [0.0; 5];
            let mut total_node: Option<Var<'_>> = None;
            for (slot, acc) in accs.iter().enumerate() {
                if let Some(a) = acc {
                    term_sums[slot] = a.value();
                    let weighted = a.scale(lambda[slot]);
                    total_node = Some(match total_node {
                        None => weighted,
                        Some(t) => t + weighted,
                    });
                }
            }
            let total_node = total_node.expect("chunk is nonempty");
            let loss = total_node.value();
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    term: format!("{} loss chunk", spec.name),
                    index: first,
                });
            }
            let mut cgrad = vec![0.0; n_params];
            let mut adj = Vec::new();
            cell.0.borrow().backward(total_node.id, &net.params, &[], &mut cgrad, &mut adj);
            Ok((loss, term_sums, cgrad))
        };

        // Evaluate chunks (in parallel when a pool is available) and fold the
        // partial results in chunk-index order for determinism.
        let results: Result<Vec<(f64, [f64; 5], Vec<f64>)>> =
            if rayon::current_num_threads() > 1 {
                chunks.par_iter().map(record_chunk).collect()
            } else {
                chunks.iter().map(record_chunk).collect()
            };
        let mut total = 0.0;
        let mut terms = [0.0; 5];
        for (loss, term_sums, cgrad) in results? {
            total += loss;
            for (acc, t) in terms.iter_mut().zip(term_sums.iter()) {
                *acc += t;
            }
            for (g, c) in grad.iter_mut().zip(cgrad.iter()) {
                *g += c;
            }
        }
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { term: format!("{} gradient", spec.name), index: 0 });
        }
        self.last = terms;
        Ok(total)
    }
}

impl Objective for PinnLoss<'_> {
    fn dim(&self) -> usize {
        self.scratch.shape.param_count()
    }

    fn value(&mut self, params: &[f64]) -> Result<f64> {
        let b = self.breakdown(params)?;
        self.last = [b.interior[0], b.interior[1], b.boundary, b.initial[0], b.initial[1]];
        Ok(b.total)
    }

    fn value_grad(&mut self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.loss_grad(params, grad)
    }

    fn term_names(&self) -> Vec<&'static str> {
        loss_term_names(self.spec.components)
    }

    fn last_terms(&self) -> Vec<f64> {
        if self.spec.components == 2 {
            self.last.to_vec()
        } else {
            vec![self.last[0], self.last[2], self.last[3]]
        }
    }
}

/// Record one network forward pass at `(x, t)` on the tape, optionally
/// seeding a unit direction along one spatial axis so first derivatives are
/// available.  Returns one handle per output component.
fn record_forward<'t>(
    cell: &'t TapeCell,
    net: &DenseNetwork,
    x: &[f64],
    t: f64,
    deriv_axis: Option<usize>,
) -> Result<Vec<Var<'t>>> {
    let n_in = x.len() + 1;
    let mut ids = Vec::with_capacity(n_in);
    for a in 0..n_in {
        let coord = if a < x.len() { x[a] } else { t };
        let d = if deriv_axis == Some(a) { 1.0 } else { 0.0 };
        ids.push(cell.constant_jet([coord, d, 0.0, 0.0]).id);
    }
    let outs = forward_on_tape_with(
        &net.shape,
        &net.params,
        &mut cell.0.borrow_mut(),
        ParamSource::Trainable,
        &ids,
    )?;
    Ok(outs.into_iter().map(|id| cell.var(id)).collect())
}

/// Tape twin of the probe-route slot gatherer: one recorded forward pass per
/// probe direction, derivative slots extracted as tape nodes.  The slot
/// layout must match the probe route exactly; a consistency test pins them.
fn record_point_derivs<'t>(
    cell: &'t TapeCell,
    net: &DenseNetwork,
    spec: &ProblemSpec,
    x: &[f64],
    t: f64,
) -> Result<PointDerivs<Var<'t>>> {
    let zero = cell.constant(0.0);
    let mut u = CompDerivs::value_only(zero);
    let mut v: Option<CompDerivs<Var<'t>>> =
        (spec.components == 2).then(|| CompDerivs::value_only(zero));
    let mut value_set = false;
    for &(dir, order) in spec.interior_probes() {
        let axis = match dir {
            ProbeDir::T => spec.dim,
            ProbeDir::X(a) => a,
        };
        let n_in = spec.dim + 1;
        let mut ids = Vec::with_capacity(n_in);
        for a in 0..n_in {
            let coord = if a < spec.dim { x[a] } else { t };
            let d = if axis == a { 1.0 } else { 0.0 };
            ids.push(cell.constant_jet([coord, d, 0.0, 0.0]).id);
        }
        let outs = forward_on_tape_with(
            &net.shape,
            &net.params,
            &mut cell.0.borrow_mut(),
            ParamSource::Trainable,
            &ids,
        )?;
        let j0 = cell.var(outs[0]);
        if !value_set {
            u.val = j0.deriv(0);
            if let Some(vv) = v.as_mut() {
                vv.val = cell.var(outs[1]).deriv(0);
            }
            value_set = true;
        }
        match dir {
            ProbeDir::T => {
                u.dt = Some(j0.deriv(1));
                if let Some(vv) = v.as_mut() {
                    vv.dt = Some(cell.var(outs[1]).deriv(1));
                }
            }
            ProbeDir::X(a) => {
                u.dx[a] = Some(j0.deriv(1));
                if order >= 2 {
                    u.dxx[a] = Some(j0.deriv(2));
                }
                if order >= 3 {
                    u.dxxx = Some(j0.deriv(3));
                }
            }
        }
    }
    Ok(PointDerivs { u, v })
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First-order moment-averaging optimizer with bias correction.
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Drop accumulated moments (used when restarting on a warm-started net).
    pub fn reset_moments(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "adam step",
                expected: self.m.len(),
                got: params.len().max(grad.len()),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { term: "gradient".into(), index: i });
        }
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
        }
        Ok(())
    }
}

/// Lowest loss seen so far and the parameters that produced it.
pub struct BestTracker {
    pub loss: f64,
    pub params: Vec<f64>,
}

impl BestTracker {
    pub fn new(dim: usize) -> Self {
        BestTracker { loss: f64::INFINITY, params: vec![0.0; dim] }
    }

    pub fn observe(&mut self, loss: f64, params: &[f64]) {
        if loss < self.loss {
            self.loss = loss;
            self.params.copy_from_slice(params);
        }
    }
}

/// Loss (and per-term means, when the objective reports them) at every
/// visited iterate of a descent run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseTrace {
    pub history: Vec<f64>,
    /// One entry per history entry; empty inner vectors when the objective
    /// does not break its loss into terms.
    pub terms: Vec<Vec<f64>>,
}

impl PhaseTrace {
    fn push(&mut self, f: f64, obj: &impl Objective) {
        self.history.push(f);
        self.terms.push(obj.last_terms());
    }
}

/// Run `iters` moment-averaged gradient steps, appending the loss at each
/// visited iterate to the trace and tracking the best iterate seen.
pub fn adam_descend(
    obj: &mut impl Objective,
    params: &mut [f64],
    adam: &mut Adam,
    iters: usize,
    trace: &mut PhaseTrace,
    best: &mut BestTracker,
) -> Result<()> {
    let mut grad = vec![0.0; obj.dim()];
    for _ in 0..iters {
        let f = obj.value_grad(params, &mut grad)?;
        trace.push(f, obj);
        best.observe(f, params);
        adam.step(params, &grad)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsConfig {
    /// Initial trial step of the backtracking line search.
    pub step0: f64,
    /// Number of curvature pairs retained.
    pub memory: usize,
    /// Sufficient-decrease slope factor.
    pub c1: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Stop when the gradient sup-norm falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            step0: 1.0,
            memory: 10,
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
            grad_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    GradientTol,
    LineSearchFailed,
    ZeroGradient,
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two-loop recursion: applies the inverse-curvature estimate held in
/// `pairs` to the gradient and returns the (descent) direction.
fn two_loop(pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = pairs.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or(1.0);
    q.iter_mut().for_each(|qi| *qi *= gamma);
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Limited-memory quasi-Newton descent with backtracking line search.
///
/// Accepted losses are appended to the trace and are non-increasing; pairs
/// with non-positive curvature are skipped; if the line search fails even
/// along steepest descent the run stops gracefully with the best iterate
/// still tracked.
pub fn lbfgs_descend(
    obj: &mut impl Objective,
    params: &mut [f64],
    cfg: &LbfgsConfig,
    iters: usize,
    trace: &mut PhaseTrace,
    best: &mut BestTracker,
) -> Result<LbfgsReport> {
    let n = obj.dim();
    if iters == 0 {
        return Ok(LbfgsReport { iterations: 0, reason: StopReason::Budget });
    }
    let mut grad = vec![0.0; n];
    let mut f = obj.value_grad(params, &mut grad)?;
    trace.push(f, obj);
    best.observe(f, params);
    if inf_norm(&grad) == 0.0 {
        return Ok(LbfgsReport { iterations: 0, reason: StopReason::ZeroGradient });
    }
    if inf_norm(&grad) <= cfg.grad_tol {
        return Ok(LbfgsReport { iterations: 0, reason: StopReason::GradientTol });
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut candidate = vec![0.0; n];
    let mut grad_new = vec![0.0; n];
    for it in 0..iters {
        let mut dir = two_loop(&pairs, &grad);
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // The estimate is not a descent direction here; fall back to
            // steepest descent with fresh memory.
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let mut step = cfg.step0;
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            for i in 0..n {
                candidate[i] = params[i] + step * dir[i];
            }
            let f_try = obj.value(&candidate)?;
            if f_try.is_finite() && f_try <= f + cfg.c1 * step * slope {
                accepted = true;
                break;
            }
            step *= cfg.shrink;
        }
        if !accepted {
            log::debug!("line search exhausted at iteration {it}; keeping best iterate");
            return Ok(LbfgsReport { iterations: it, reason: StopReason::LineSearchFailed });
        }
        // Use the gradient-route value for bookkeeping so the recorded
        // history matches the iterate actually adopted.
        let f_new = obj.value_grad(&candidate, &mut grad_new)?;
        let s: Vec<f64> = (0..n).map(|i| candidate[i] - params[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| grad_new[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            let rho = 1.0 / sy;
            pairs.push_back((s, y, rho));
        }
        params.copy_from_slice(&candidate);
        grad.copy_from_slice(&grad_new);
        f = f_new;
        trace.push(f, obj);
        best.observe(f, params);
        if inf_norm(&grad) <= cfg.grad_tol {
            return Ok(LbfgsReport { iterations: it + 1, reason: StopReason::GradientTol });
        }
    }
    Ok(LbfgsReport { iterations: iters, reason: StopReason::Budget })
}

/// Budget split and optimizer settings for one training phase.
#[derive(Clone, Copy, Debug)]
pub struct PhaseConfig {
    pub budget: usize,
    /// Fraction of the budget spent on moment-averaged descent before
    /// switching to the quasi-Newton stage.
    pub adam_fraction: f64,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            budget: 1000,
            adam_fraction: 0.8,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhaseReport {
    /// Loss at every visited iterate, both stages concatenated.
    pub history: Vec<f64>,
    /// Per-term means matching `history`, when the objective reports them.
    pub terms: Vec<Vec<f64>>,
    pub adam_iterations: usize,
    pub lbfgs: Option<LbfgsReport>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// One training phase: a moment-averaged stage followed by a quasi-Newton
/// stage, ending on the best iterate seen, so the final loss never exceeds
/// the initial one.  A zero budget leaves the parameters untouched.
pub fn train_phase(
    obj: &mut impl Objective,
    params: &mut [f64],
    cfg: &PhaseConfig,
) -> Result<PhaseReport> {
    if !(0.0..=1.0).contains(&cfg.adam_fraction) {
        return Err(Error::Config(format!(
            "optimizer split must lie in [0, 1], got {}",
            cfg.adam_fraction
        )));
    }
    if params.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            context: "phase parameters",
            expected: obj.dim(),
            got: params.len(),
        });
    }
    if cfg.budget == 0 {
        let f = obj.value(params)?;
        return Ok(PhaseReport {
            history: Vec::new(),
            terms: Vec::new(),
            adam_iterations: 0,
            lbfgs: None,
            initial_loss: f,
            final_loss: f,
        });
    }
    let n_adam = ((cfg.budget as f64) * cfg.adam_fraction).round() as usize;
    let n_adam = n_adam.min(cfg.budget);
    let n_lbfgs = cfg.budget - n_adam;

    let mut best = BestTracker::new(obj.dim());
    let mut trace = PhaseTrace::default();
    let mut adam = Adam::new(obj.dim(), cfg.adam);
    adam_descend(obj, params, &mut adam, n_adam, &mut trace, &mut best)?;
    let lbfgs = if n_lbfgs > 0 {
        Some(lbfgs_descend(obj, params, &cfg.lbfgs, n_lbfgs, &mut trace, &mut best)?)
    } else {
        None
    };
    if best.loss.is_finite() {
        params.copy_from_slice(&best.params);
    }
    let initial_loss = trace.history.first().copied().unwrap_or(best.loss);
    Ok(PhaseReport {
        history: trace.history,
        terms: trace.terms,
        adam_iterations: n_adam,
        lbfgs,
        initial_loss,
        final_loss: best.loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ExactSource;
    use crate::jet::Jet;
    use crate::problems::make_problem;
    use crate::sampling::{uniform_points, Frame, Layout, PointSet};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Separable convex quadratic with distinct curvatures.
    struct Quadratic {
        curv: Vec<f64>,
        target: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.curv.len()
        }
        fn value(&mut self, p: &[f64]) -> Result<f64> {
            Ok(p.iter()
                .zip(&self.curv)
                .zip(&self.target)
                .map(|((x, c), a)| 0.5 * c * (x - a) * (x - a))
                .sum())
        }
        fn value_grad(&mut self, p: &[f64], g: &mut [f64]) -> Result<f64> {
            for i in 0..p.len() {
                g[i] = self.curv[i] * (p[i] - self.target[i]);
            }
            self.value(p)
        }
    }

    #[test]
    fn adam_first_step_has_textbook_magnitude() {
        // theta = 1 on f = theta^2 with lr 0.1: bias correction makes the
        // first step lr * g / (|g| + eps), so theta moves to ~0.9.
        struct Sq;
        impl Objective for Sq {
            fn dim(&self) -> usize {
                1
            }
            fn value(&mut self, p: &[f64]) -> Result<f64> {
                Ok(p[0] * p[0])
            }
            fn value_grad(&mut self, p: &[f64], g: &mut [f64]) -> Result<f64> {
                g[0] = 2.0 * p[0];
                self.value(p)
            }
        }
        let mut params = [1.0];
        let mut adam = Adam::new(1, AdamConfig { lr: 0.1, ..AdamConfig::default() });
        let mut grad = [0.0];
        let f = Sq.value_grad(&params, &mut grad).unwrap();
        assert_eq!(f, 1.0);
        adam.step(&mut params, &grad).unwrap();
        assert_relative_eq!(params[0], 0.9, epsilon = 1e-7);
    }

    #[test]
    fn adam_with_zero_gradient_does_not_move() {
        let mut params = [0.3, -0.7];
        let before = params;
        let mut adam = Adam::new(2, AdamConfig::default());
        adam.step(&mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn lbfgs_drives_quadratic_gradient_below_tolerance() {
        let mut obj = Quadratic {
            curv: (1..=10).map(|i| i as f64).collect(),
            target: (0..10).map(|i| (i as f64 * 0.7).sin()).collect(),
        };
        let mut params = vec![0.0; 10];
        let mut trace = PhaseTrace::default();
        let mut best = BestTracker::new(10);
        let cfg = LbfgsConfig { grad_tol: 1e-8, ..LbfgsConfig::default() };
        let report =
            lbfgs_descend(&mut obj, &mut params, &cfg, 50, &mut trace, &mut best).unwrap();
        assert_eq!(report.reason, StopReason::GradientTol);
        assert!(report.iterations <= 50);
        let mut grad = vec![0.0; 10];
        obj.value_grad(&params, &mut grad).unwrap();
        assert!(inf_norm(&grad) < 1e-8, "final gradient {:e}", inf_norm(&grad));
        // Accepted losses decrease monotonically.
        for w in trace.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "history not monotone: {w:?}");
        }
    }

    #[test]
    fn lbfgs_at_a_stationary_point_terminates_immediately() {
        let mut obj = Quadratic { curv: vec![2.0; 3], target: vec![0.5; 3] };
        let mut params = vec![0.5; 3];
        let mut trace = PhaseTrace::default();
        let mut best = BestTracker::new(3);
        let report = lbfgs_descend(
            &mut obj,
            &mut params,
            &LbfgsConfig::default(),
            25,
            &mut trace,
            &mut best,
        )
        .unwrap();
        assert_eq!(report.reason, StopReason::ZeroGradient);
        assert_eq!(report.iterations, 0);
        assert_eq!(params, vec![0.5; 3]);
    }

    #[test]
    fn zero_budget_phase_is_a_no_op() {
        let mut obj = Quadratic { curv: vec![1.0; 4], target: vec![0.0; 4] };
        let mut params = vec![1.0, 2.0, 3.0, 4.0];
        let before = params.clone();
        let cfg = PhaseConfig { budget: 0, ..PhaseConfig::default() };
        let report = train_phase(&mut obj, &mut params, &cfg).unwrap();
        assert_eq!(params, before);
        assert!(report.history.is_empty());
        assert_eq!(report.initial_loss, report.final_loss);
    }

    #[test]
    fn phase_final_loss_never_exceeds_initial() {
        let mut obj = Quadratic {
            curv: (1..=6).map(|i| i as f64).collect(),
            target: vec![1.0; 6],
        };
        let mut params = vec![0.0; 6];
        let cfg = PhaseConfig {
            budget: 60,
            adam_fraction: 0.5,
            adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
            lbfgs: LbfgsConfig::default(),
        };
        let report = train_phase(&mut obj, &mut params, &cfg).unwrap();
        assert!(report.final_loss <= report.initial_loss);
        assert!(report.final_loss < 1e-8, "final {:e}", report.final_loss);
        assert!(!report.history.is_empty());
    }

    fn small_points(spec: &crate::problems::ProblemSpec, seed: u64) -> PointSet {
        uniform_points(&spec.domain, spec.dim, 12, 6, 8, Layout::Grid, seed).unwrap()
    }

    #[test]
    fn exact_solutions_have_negligible_loss() {
        for name in ["kg1d", "kg1d_forced", "sg1d", "wave2d", "sg2d"] {
            let spec = make_problem(name).unwrap();
            let points =
                uniform_points(&spec.domain, spec.dim, 64, 16, 16, Layout::Grid, 7).unwrap();
            let src = ExactSource { spec: &spec };
            let b = pinn_loss(&spec, &src, &points, &LossWeights::default()).unwrap();
            assert!(b.total < 1e-10, "{name}: exact-solution loss {:e}", b.total);
        }
        // The smooth two-dimensional case is clean to full precision.
        let spec = make_problem("wave2d").unwrap();
        let points = uniform_points(&spec.domain, 2, 64, 16, 16, Layout::Grid, 7).unwrap();
        let b =
            pinn_loss(&spec, &ExactSource { spec: &spec }, &points, &LossWeights::default())
                .unwrap();
        assert!(b.total < 1e-12, "wave2d exact loss {:e}", b.total);
    }

    /// Field with `u = t`: the scalar advection-dispersion residual
    /// `u_t + 6 u u_x + u_xxx` is exactly one everywhere.
    struct UnitResidual;
    impl crate::fields::FieldSource for UnitResidual {
        fn components(&self) -> usize {
            1
        }
        fn probe(
            &self,
            _x: &[f64],
            t: f64,
            dir: ProbeDir,
            _order: usize,
        ) -> Result<Vec<Jet>> {
            let d = match dir {
                ProbeDir::T => 1.0,
                ProbeDir::X(_) => 0.0,
            };
            Ok(vec![Jet::from_coeffs([t, d, 0.0, 0.0])])
        }
    }

    #[test]
    fn unit_residual_field_gives_unit_interior_mean() {
        let spec = make_problem("kdv1d").unwrap();
        let points = small_points(&spec, 3);
        let b = pinn_loss(&spec, &UnitResidual, &points, &LossWeights::default()).unwrap();
        assert_eq!(b.interior[0], 1.0);
    }

    #[test]
    fn loss_is_linear_in_term_weights() {
        let spec = make_problem("kg1d_forced").unwrap();
        let points = small_points(&spec, 5);
        let shape = NetShape::rectangle(2, 2, 5, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let net = DenseNetwork::glorot(shape.clone(), &mut rng);

        let mut loss1 = PinnLoss::new(&spec, &shape, &points, LossWeights::default()).unwrap();
        let w2 = LossWeights { boundary: 2.0, ..LossWeights::default() };
        let mut loss2 = PinnLoss::new(&spec, &shape, &points, w2).unwrap();
        let b1 = loss1.breakdown(&net.params).unwrap();
        let b2 = loss2.breakdown(&net.params).unwrap();
        assert_eq!(b1.boundary, b2.boundary);
        assert!(b1.boundary > 0.0);
        assert_relative_eq!(b2.total - b1.total, b1.boundary, max_relative = 1e-12);
    }

    #[test]
    fn missing_point_category_is_a_structural_error() {
        let spec = make_problem("kg1d_forced").unwrap();
        let points = PointSet {
            dim: 1,
            frame: Frame::Physical,
            interior: vec![0.5, 0.5],
            initial: vec![0.5, 0.0],
            boundary: Vec::new(),
            faces: Vec::new(),
            grid_warning: None,
        };
        let shape = NetShape::rectangle(2, 1, 4, 2).unwrap();
        let err = PinnLoss::new(&spec, &shape, &points, LossWeights::default())
            .err()
            .expect("empty boundary category must be rejected");
        assert!(matches!(err, Error::Structural(_)), "got {err:?}");
        assert!(err.to_string().contains("boundary"));
    }

    #[test]
    fn probe_and_tape_routes_agree_and_are_deterministic() {
        let spec = make_problem("sg2d").unwrap();
        let points = uniform_points(&spec.domain, 2, 18, 6, 8, Layout::Grid, 9).unwrap();
        let shape = NetShape::rectangle(3, 2, 5, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let net = DenseNetwork::glorot(shape.clone(), &mut rng);
        let mut loss = PinnLoss::new(&spec, &shape, &points, LossWeights::default()).unwrap();

        let value = loss.value(&net.params).unwrap();
        let mut g1 = vec![0.0; shape.param_count()];
        let mut g2 = vec![0.0; shape.param_count()];
        let v1 = loss.value_grad(&net.params, &mut g1).unwrap();
        let v2 = loss.value_grad(&net.params, &mut g2).unwrap();
        assert_relative_eq!(value, v1, max_relative = 1e-12);
        assert_eq!(v1, v2, "gradient-route loss must be reproducible bit for bit");
        assert_eq!(g1, g2, "gradients must be reproducible bit for bit");
    }

    /// Central-difference check of the recorded gradient on every benchmark;
    /// this exercises first through third input derivatives, forcing terms,
    /// and all three boundary treatments.
    #[test]
    fn loss_gradient_matches_finite_differences_on_every_problem() {
        for name in crate::problems::PROBLEM_NAMES {
            let spec = make_problem(name).unwrap();
            let points = small_points(&spec, 13);
            let shape = NetShape::rectangle(spec.dim + 1, 2, 6, spec.components).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(31);
            let net = DenseNetwork::glorot(shape.clone(), &mut rng);
            let mut loss = PinnLoss::new(&spec, &shape, &points, LossWeights::default()).unwrap();

            let n = shape.param_count();
            let mut grad = vec![0.0; n];
            loss.value_grad(&net.params, &mut grad).unwrap();

            let picks: Vec<usize> =
                [0, n / 5, 2 * n / 5, n / 2, 3 * n / 5, 4 * n / 5, n - 1].to_vec();
            for &i in &picks {
                let h = 1e-6 * net.params[i].abs().max(1.0);
                let mut plus = net.params.clone();
                plus[i] += h;
                let mut minus = net.params.clone();
                minus[i] -= h;
                let fd =
                    (loss.value(&plus).unwrap() - loss.value(&minus).unwrap()) / (2.0 * h);
                let scale = grad[i].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (grad[i] - fd).abs() / scale < 1e-5,
                    "{name}: d/dp[{i}] recorded {} vs finite difference {}",
                    grad[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn full_phase_on_a_small_network_is_deterministic() {
        let spec = make_problem("kg1d_forced").unwrap();
        let points = small_points(&spec, 17);
        let shape = NetShape::rectangle(2, 2, 5, 2).unwrap();
        let cfg = PhaseConfig {
            budget: 30,
            adam_fraction: 0.8,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            lbfgs: LbfgsConfig { step0: 0.5, ..LbfgsConfig::default() },
        };
        let run = || {
            let mut rng = ChaCha20Rng::seed_from_u64(41);
            let net = DenseNetwork::glorot(shape.clone(), &mut rng);
            let mut loss =
                PinnLoss::new(&spec, &shape, &points, LossWeights::default()).unwrap();
            let mut params = net.params.clone();
            let report = train_phase(&mut loss, &mut params, &cfg).unwrap();
            (params, report)
        };
        let (p1, r1) = run();
        let (p2, r2) = run();
        assert_eq!(p1, p2, "trained parameters must be bit-identical");
        assert_eq!(r1.history, r2.history);
        assert!(r1.final_loss <= r1.initial_loss);
        assert!(r1.final_loss < r1.initial_loss, "training should make progress");
    }
}
