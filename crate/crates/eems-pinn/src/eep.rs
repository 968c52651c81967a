//! Moving-mesh machinery: monitor functions, the equidistribution residual,
//! and the relocation loss that trains the coordinate map.
//!
//! The steady equidistribution operator in one dimension is
//! `E = d/dxi (omega * dx/dxi)`; in two dimensions each component gets a sum
//! over computational axes, `E_k = sum_j d/dxi_j (omega * dx_k/dxi_j)`.
//! A mesh that equidistributes the monitor `omega` makes `E` vanish.  The
//! map is relaxed toward that state either by penalizing
//! `dx/dt + (1/tau) E` directly (location form) or by prescribing the mesh
//! velocity `x_t = -A^{-1} ((1/tau) E + E_t)` with `A = dE/dx` (velocity
//! form).
//!
//! Gradients with respect to the map network run through the operation
//! tape.  The monitor network stays frozen: its forward passes are recorded
//! with frozen parameter rows, and probes at mapped points are anchored with
//! seed nodes so the reverse sweep chains through the point location.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{field_sample, NetSource};
use crate::jet::Jet;
use crate::network::{eval_generic, forward_on_tape_with, DenseNetwork};
use crate::problems::{Domain, FieldSample, ProbeDir, ProblemSpec};
use crate::real::{Dual, Real};
use crate::sampling::{normalizer, MeshMap, NormalizerKind, PointSet};
use crate::tape::{ParamSource, TapeCell, Var};
use crate::training::{train_phase, Objective, PhaseConfig, PhaseReport, CHUNK};

/// How the relocation loss uses the equidistribution residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmmMode {
    /// Penalize `dx/dt + (1/tau) E` at every collocation point.
    Location,
    /// Prescribe `x_t = -A^{-1}((1/tau) E + E_t)` and penalize the gap to
    /// the map's actual time derivative.  The coefficients `A`, `E`, and
    /// `E_t` are held fixed while differentiating the loss.
    Velocity,
}

/// Relaxation and regularization settings for mesh movement.
#[derive(Clone, Copy, Debug)]
pub struct EmmConfig {
    /// Relaxation time scale of the moving mesh.
    pub tau: f64,
    pub mode: EmmMode,
    /// Tikhonov shift added to the mesh response matrix in velocity form.
    pub delta: f64,
    /// Least monitor value tolerated; the energy monitor shifts itself to
    /// clear twice this at its probe grid.
    pub c_min: f64,
}

impl Default for EmmConfig {
    fn default() -> Self {
        EmmConfig { tau: 0.1, mode: EmmMode::Location, delta: 1e-6, c_min: 1e-3 }
    }
}

impl EmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("mesh relaxation time must be positive, got {}", self.tau)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("matrix regularization must be nonnegative, got {}", self.delta)));
        }
        if !(self.c_min > 0.0 && self.c_min.is_finite()) {
            return Err(Error::Config(format!("monitor floor must be positive, got {}", self.c_min)));
        }
        Ok(())
    }
}

fn check_positive(value: f64, floor: f64, x: &[f64], t: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0 && value >= floor) {
        return Err(Error::MonitorPositivity {
            value,
            floor,
            location: format!("x = {x:?}, t = {t}"),
        });
    }
    Ok(())
}

/// A positive scalar field steering mesh density, with its spatial gradient.
///
/// `value_grad` is generic over the scalar so the same formulas serve plain
/// evaluation and tangent propagation (used for the residual's time
/// derivative).  `record` re-expresses the evaluation as tape nodes at a
/// mapped point so the relocation loss can differentiate through the map.
pub trait Monitor {
    fn dim(&self) -> usize;

    /// Least admissible monitor value; evaluations below it are errors.
    fn floor(&self) -> f64 {
        0.0
    }

    /// Parameter block the tape must treat as frozen, if any.
    fn frozen_params(&self) -> Option<&[f64]> {
        None
    }

    fn value_grad<S: Real>(&self, x: &[S], t: S) -> Result<(S, [S; 2])>;

    /// Record first-order expansions `[omega, d omega/d xi_j]` at a mapped
    /// point, one per computational axis.  `x` holds the mapped coordinate
    /// nodes and `map_jets[j][k]` the order-2 expansion of `x_k` along
    /// `xi_j`, so the monitor can chain its spatial gradient through the
    /// map.
    fn record<'t>(
        &self,
        cell: &'t TapeCell,
        t: f64,
        x: &[Var<'t>],
        map_jets: &[Vec<Var<'t>>],
    ) -> Result<Vec<Var<'t>>>;
}

/// Uniform monitor; equidistribution keeps the mesh uniform.
#[derive(Clone, Copy, Debug)]
pub struct ConstantMonitor {
    pub dim: usize,
    pub value: f64,
}

impl Monitor for ConstantMonitor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad<S: Real>(&self, x: &[S], _t: S) -> Result<(S, [S; 2])> {
        let zero = x[0].scale(0.0);
        Ok((zero.shift(self.value), [zero, zero]))
    }

    fn record<'t>(
        &self,
        cell: &'t TapeCell,
        _t: f64,
        _x: &[Var<'t>],
        map_jets: &[Vec<Var<'t>>],
    ) -> Result<Vec<Var<'t>>> {
        let omega = cell.constant(self.value);
        let zero = cell.constant(0.0);
        Ok((0..map_jets.len()).map(|_| omega.pair(zero)).collect())
    }
}

/// Affine monitor `omega = base + slope . x`; handy for closed-form mesh
/// oracles.
#[derive(Clone, Copy, Debug)]
pub struct LinearMonitor {
    pub dim: usize,
    pub base: f64,
    pub slope: [f64; 2],
}

impl Monitor for LinearMonitor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad<S: Real>(&self, x: &[S], _t: S) -> Result<(S, [S; 2])> {
        let zero = x[0].scale(0.0);
        let mut omega = zero.shift(self.base);
        let mut grad = [zero, zero];
        for a in 0..self.dim {
            omega = omega + x[a].scale(self.slope[a]);
            grad[a] = zero.shift(self.slope[a]);
        }
        Ok((omega, grad))
    }

    fn record<'t>(
        &self,
        cell: &'t TapeCell,
        _t: f64,
        x: &[Var<'t>],
        map_jets: &[Vec<Var<'t>>],
    ) -> Result<Vec<Var<'t>>> {
        let mut omega = cell.constant(self.base);
        for a in 0..self.dim {
            omega = omega + x[a].scale(self.slope[a]);
        }
        let mut out = Vec::with_capacity(map_jets.len());
        for jets in map_jets {
            // d omega/d xi_j = sum_l slope_l * J_lj.
            let mut d = cell.constant(0.0);
            for l in 0..self.dim {
                d = d + jets[l].deriv(1).scale(self.slope[l]);
            }
            out.push(omega.pair(d));
        }
        Ok(out)
    }
}

/// Energy-density monitor: the (shifted) energy density of a frozen
/// solution network.  The shift is chosen on a space-time probe grid so the
/// monitor clears twice the configured floor there; an evaluation below the
/// floor anywhere is an error, never clamped.
pub struct EnergyMonitor<'a> {
    spec: &'a ProblemSpec,
    net: &'a DenseNetwork,
    shift: f64,
    floor: f64,
}

impl<'a> EnergyMonitor<'a> {
    /// Probe the frozen net's energy density over an inclusive lattice of
    /// the space-time box and choose the additive shift.
    pub fn build(spec: &'a ProblemSpec, net: &'a DenseNetwork, c_min: f64) -> Result<Self> {
        if !(c_min > 0.0 && c_min.is_finite()) {
            return Err(Error::Config(format!("monitor floor must be positive, got {c_min}")));
        }
        if net.shape.n_in() != spec.dim + 1 || net.shape.n_out() != spec.components {
            return Err(Error::DimensionMismatch {
                context: "monitor net vs problem",
                expected: spec.dim + 1,
                got: net.shape.n_in(),
            });
        }
        let (nx, nt) = if spec.dim == 1 { (129, 33) } else { (33, 17) };
        let src = NetSource { net };
        let dom = &spec.domain;
        let mut min_density = f64::INFINITY;
        let mut x = [0.0f64; 2];
        let mut idx = vec![0usize; spec.dim];
        loop {
            for a in 0..spec.dim {
                let f = idx[a] as f64 / (nx - 1) as f64;
                x[a] = dom.lo[a] + f * dom.extent(a);
            }
            for it in 0..nt {
                let t = dom.t_end * it as f64 / (nt - 1) as f64;
                let sample = field_sample(spec, &src, &x[..spec.dim], t)?;
                let rho = spec.energy_density(&sample);
                if !rho.is_finite() {
                    return Err(Error::NonFinite {
                        term: "monitor probe density".into(),
                        index: it,
                    });
                }
                min_density = min_density.min(rho);
            }
            // Odometer over the spatial lattice.
            let mut a = 0;
            loop {
                if a == spec.dim {
                    return finish(spec, net, c_min, min_density);
                }
                idx[a] += 1;
                if idx[a] < nx {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }

        fn finish<'b>(
            spec: &'b ProblemSpec,
            net: &'b DenseNetwork,
            c_min: f64,
            min_density: f64,
        ) -> Result<EnergyMonitor<'b>> {
            // Margin of two floors: mapped points can fall between probes,
            // so the probe minimum alone would sit exactly at the limit.
            let shift = (2.0 * c_min - min_density).max(0.0);
            Ok(EnergyMonitor { spec, net, shift, floor: c_min })
        }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Probe directions: one per spatial axis, plus the diagonal in two
    /// dimensions (its second derivative polarizes into the mixed term).
    fn probe_dirs(&self) -> Vec<[f64; 2]> {
        let d = self.spec.dim;
        let mut dirs = Vec::with_capacity(d + 1);
        for a in 0..d {
            let mut e = [0.0; 2];
            e[a] = 1.0;
            dirs.push(e);
        }
        if d == 2 {
            dirs.push([1.0, 1.0]);
        }
        dirs
    }
}

/// Derivative slots of a component field needed for the monitor gradient.
struct MonitorSlots<S> {
    u: S,
    v: Option<S>,
    du: [Option<S>; 2],
    dv: [Option<S>; 2],
    /// Second derivatives of `u`; the off-diagonal entry comes from the
    /// diagonal probe by polarization.
    d2: [[Option<S>; 2]; 2],
}

impl<'m> EnergyMonitor<'m> {
    fn slots_generic<S: Real>(&self, x: &[S], t: S) -> Result<MonitorSlots<S>> {
        let d = self.spec.dim;
        let m = self.spec.components;
        let mut probes: Vec<Vec<Jet<S>>> = Vec::new();
        let mut outs: Vec<Jet<S>> = Vec::new();
        for dir in self.probe_dirs() {
            let mut inputs: Vec<Jet<S>> = Vec::with_capacity(d + 1);
            for a in 0..d {
                inputs.push(Jet::lift_dir(x[a], dir[a]));
            }
            inputs.push(Jet::lift_dir(t, 0.0));
            outs.clear();
            eval_generic(&self.net.shape, &self.net.params, &inputs, &mut outs)?;
            probes.push(outs.clone());
        }
        let zero = x[0].scale(0.0);
        let mut s = MonitorSlots {
            u: probes[0][0].c[0],
            v: (m == 2).then(|| probes[0][1].c[0]),
            du: [None, None],
            dv: [None, None],
            d2: [[None, None], [None, None]],
        };
        for a in 0..d {
            s.du[a] = Some(probes[a][0].c[1]);
            s.d2[a][a] = Some(probes[a][0].c[2].scale(2.0));
            if m == 2 {
                s.dv[a] = Some(probes[a][1].c[1]);
            }
        }
        if d == 2 {
            let ddiag = probes[2][0].c[2].scale(2.0);
            let mixed = (ddiag - s.d2[0][0].unwrap() - s.d2[1][1].unwrap()).scale(0.5);
            s.d2[0][1] = Some(mixed);
            s.d2[1][0] = Some(mixed);
        }
        let _ = zero;
        Ok(s)
    }

    /// Density and its spatial gradient assembled from slots: for each axis
    /// `l`, every density input becomes the first-order expansion
    /// `[slot, d slot/d x_l]` and the density formula itself propagates the
    /// derivative.
    fn density_grad<S: Real>(&self, s: &MonitorSlots<S>) -> (S, [S; 2]) {
        let d = self.spec.dim;
        let zero = s.u.scale(0.0);
        let lift = |v: S| Jet::lift(v);
        let pair = |v: S, dv: S| Jet::from_coeffs([v, dv, zero, zero]);

        let plain = FieldSample {
            u: lift(s.u),
            du: [s.du[0].map(lift), s.du[1].map(lift)],
            v: s.v.map(lift),
        };
        let rho = self.spec.energy_density(&plain).c[0];

        let mut grad = [zero, zero];
        for l in 0..d {
            let sample = FieldSample {
                u: pair(s.u, s.du[l].unwrap()),
                du: [
                    s.du[0].map(|v| pair(v, s.d2[0][l].unwrap())),
                    s.du[1].map(|v| pair(v, s.d2[1][l].unwrap())),
                ],
                v: s.v.map(|v| pair(v, s.dv[l].unwrap())),
            };
            grad[l] = self.spec.energy_density(&sample).c[1];
        }
        (rho, grad)
    }
}

impl Monitor for EnergyMonitor<'_> {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn floor(&self) -> f64 {
        self.floor
    }

    fn frozen_params(&self) -> Option<&[f64]> {
        Some(&self.net.params)
    }

    fn value_grad<S: Real>(&self, x: &[S], t: S) -> Result<(S, [S; 2])> {
        let slots = self.slots_generic(x, t)?;
        let (rho, grad) = self.density_grad(&slots);
        let omega = rho.shift(self.shift);
        let xval: Vec<f64> = x.iter().map(|c| c.value()).collect();
        check_positive(omega.value(), self.floor, &xval, t.value())?;
        Ok((omega, grad))
    }

    fn record<'t>(
        &self,
        cell: &'t TapeCell,
        t: f64,
        x: &[Var<'t>],
        map_jets: &[Vec<Var<'t>>],
    ) -> Result<Vec<Var<'t>>> {
        let d = self.spec.dim;
        let m = self.spec.components;
        // Frozen forward passes at the mapped point: inputs are seed nodes
        // anchored on the coordinate values, so adjoints of every read slot
        // chain back into the map.
        let mut probes: Vec<Vec<Var<'t>>> = Vec::new();
        for dir in self.probe_dirs() {
            let outs = {
                let mut tape = cell.0.borrow_mut();
                let mut ids = Vec::with_capacity(d + 1);
                for k in 0..d {
                    ids.push(tape.seed(x[k].id, dir[k]));
                }
                ids.push(tape.scalar(t));
                forward_on_tape_with(
                    &self.net.shape,
                    &self.net.params,
                    &mut tape,
                    ParamSource::Frozen(0),
                    &ids,
                )?
            };
            probes.push(outs.into_iter().map(|id| cell.var(id)).collect());
        }
        let slots = {
            let u = probes[0][0].deriv(0);
            let v = (m == 2).then(|| probes[0][1].deriv(0));
            let mut s = MonitorSlots { u, v, du: [None, None], dv: [None, None], d2: [[None, None], [None, None]] };
            for a in 0..d {
                s.du[a] = Some(probes[a][0].deriv(1));
                s.d2[a][a] = Some(probes[a][0].deriv(2));
                if m == 2 {
                    s.dv[a] = Some(probes[a][1].deriv(1));
                }
            }
            if d == 2 {
                let ddiag = probes[2][0].deriv(2);
                let mixed = (ddiag - s.d2[0][0].unwrap() - s.d2[1][1].unwrap()).scale(0.5);
                s.d2[0][1] = Some(mixed);
                s.d2[1][0] = Some(mixed);
            }
            s
        };

        // Same pair-expansion assembly as the generic path, with tape pair
        // nodes playing the first-order jets.
        let zero = cell.constant(0.0);
        let plain = FieldSample {
            u: slots.u.pair(zero),
            du: [slots.du[0].map(|v| v.pair(zero)), slots.du[1].map(|v| v.pair(zero))],
            v: slots.v.map(|v| v.pair(zero)),
        };
        let omega = self.spec.energy_density(&plain).deriv(0).shift(self.shift);
        let xval: Vec<f64> = x.iter().map(|c| c.value()).collect();
        check_positive(omega.value(), self.floor, &xval, t)?;

        let mut grad = [zero, zero];
        for l in 0..d {
            let sample = FieldSample {
                u: slots.u.pair(slots.du[l].unwrap()),
                du: [
                    slots.du[0].map(|v| v.pair(slots.d2[0][l].unwrap())),
                    slots.du[1].map(|v| v.pair(slots.d2[1][l].unwrap())),
                ],
                v: slots.v.map(|v| v.pair(slots.dv[l].unwrap())),
            };
            grad[l] = self.spec.energy_density(&sample).deriv(1);
        }

        let mut out = Vec::with_capacity(map_jets.len());
        for jets in map_jets {
            let mut dxi = cell.constant(0.0);
            for l in 0..d {
                dxi = dxi + grad[l] * jets[l].deriv(1);
            }
            out.push(omega.pair(dxi));
        }
        Ok(out)
    }
}

/// A time-dependent coordinate map probed by directional expansions, the
/// same convention field sources use: order-2 expansions along one
/// computational axis, or an order-1 expansion in time.
pub trait CoordMap {
    fn dim(&self) -> usize;
    fn probe<S: Real>(&self, xi: &[f64], t: S, dir: ProbeDir, order: usize)
        -> Result<Vec<Jet<S>>>;
}

impl CoordMap for MeshMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn probe<S: Real>(
        &self,
        xi: &[f64],
        t: S,
        dir: ProbeDir,
        order: usize,
    ) -> Result<Vec<Jet<S>>> {
        if order > 2 {
            return Err(Error::UnsupportedOrder(order));
        }
        if xi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "map probe point",
                expected: self.dim,
                got: xi.len(),
            });
        }
        let lift = |v: f64| t.scale(0.0).shift(v);
        let mut inputs: Vec<Jet<S>> = Vec::with_capacity(self.dim + 1);
        for a in 0..self.dim {
            let s = (xi[a] - self.domain.lo[a]) / self.domain.extent(a);
            let d = match dir {
                ProbeDir::X(j) if j == a => 1.0 / self.domain.extent(a),
                _ => 0.0,
            };
            inputs.push(Jet::lift_dir(lift(s), d));
        }
        let t_seed = if dir == ProbeDir::T { 1.0 } else { 0.0 };
        inputs.push(Jet::lift_dir(t, t_seed));

        let mut disp: Vec<Jet<S>> = Vec::new();
        eval_generic(&self.net.shape, &self.net.params, &inputs, &mut disp)?;
        let psi = normalizer(self.kind, &inputs[..self.dim]);
        let mut out = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let seed = match dir {
                ProbeDir::X(j) if j == k => 1.0,
                _ => 0.0,
            };
            let base = Jet::lift_dir(lift(xi[k]), seed);
            out.push(base + (psi * disp[k]).scale(self.domain.extent(k)));
        }
        Ok(out)
    }
}

/// Equidistribution residual `E_k = sum_j d/dxi_j (omega * dx_k/dxi_j)` at
/// one computational point, expanded by the product rule through the map
/// probes and the monitor gradient.
pub fn eep_residual<S: Real>(
    map: &impl CoordMap,
    monitor: &impl Monitor,
    xi: &[f64],
    t: S,
) -> Result<Vec<S>> {
    let d = map.dim();
    if monitor.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "monitor vs map dimension",
            expected: d,
            got: monitor.dim(),
        });
    }
    let mut jets: Vec<Vec<Jet<S>>> = Vec::with_capacity(d);
    for j in 0..d {
        jets.push(map.probe(xi, t, ProbeDir::X(j), 2)?);
    }
    let x: Vec<S> = (0..d).map(|k| jets[0][k].c[0]).collect();
    let (omega, grad) = monitor.value_grad(&x, t)?;
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let mut e = omega.scale(0.0);
        for j in 0..d {
            // d omega/d xi_j chains the spatial gradient through the map.
            let mut domega = omega.scale(0.0);
            for l in 0..d {
                domega = domega + grad[l] * jets[j][l].c[1];
            }
            let jac = jets[j][k].c[1];
            let curv = jets[j][k].c[2].scale(2.0);
            e = e + domega * jac + omega * curv;
        }
        out.push(e);
    }
    Ok(out)
}

/// Solve the (regularized) mesh response system `A v = b` for up to two
/// unknowns by partial-pivot elimination.
fn solve_small(a: &[[f64; 2]; 2], b: &[f64; 2], d: usize) -> Result<[f64; 2]> {
    let singular = || Error::Structural("regularized mesh response matrix is singular".into());
    if d == 1 {
        if a[0][0].abs() < 1e-300 {
            return Err(singular());
        }
        return Ok([b[0] / a[0][0], 0.0]);
    }
    let mut m = *a;
    let mut rhs = *b;
    if m[0][0].abs() < m[1][0].abs() {
        m.swap(0, 1);
        rhs.swap(0, 1);
    }
    if m[0][0].abs() < 1e-300 {
        return Err(singular());
    }
    let f = m[1][0] / m[0][0];
    m[1][1] -= f * m[0][1];
    rhs[1] -= f * rhs[0];
    if m[1][1].abs() < 1e-300 {
        return Err(singular());
    }
    let v1 = rhs[1] / m[1][1];
    let v0 = (rhs[0] - m[0][1] * v1) / m[0][0];
    Ok([v0, v1])
}

/// Velocity-form mesh speed at one point:
/// `x_t = -A^{-1}((1/tau) E + E_t)` with `A = dE/dx` estimated by central
/// differences in the computational frame pulled back through the map
/// Jacobian, plus a Tikhonov shift.
pub fn mesh_velocity(
    map: &impl CoordMap,
    monitor: &impl Monitor,
    cfg: &EmmConfig,
    xi: &[f64],
    t: f64,
) -> Result<[f64; 2]> {
    let d = map.dim();
    let e0 = eep_residual::<f64>(map, monitor, xi, t)?;
    // Time derivative of the residual at fixed xi via a dual tangent.
    let ed = eep_residual::<Dual>(map, monitor, xi, Dual { v: t, d: 1.0 })?;

    let h = 1e-4;
    let mut de_dxi = [[0.0f64; 2]; 2];
    let mut shifted = xi.to_vec();
    for mcol in 0..d {
        shifted.copy_from_slice(xi);
        shifted[mcol] = xi[mcol] + h;
        let ep = eep_residual::<f64>(map, monitor, &shifted, t)?;
        shifted[mcol] = xi[mcol] - h;
        let em = eep_residual::<f64>(map, monitor, &shifted, t)?;
        for k in 0..d {
            de_dxi[k][mcol] = (ep[k] - em[k]) / (2.0 * h);
        }
    }

    // Map Jacobian at the center: J_km = dx_k/dxi_m.
    let mut jac = [[0.0f64; 2]; 2];
    for m in 0..d {
        let jets = map.probe::<f64>(xi, t, ProbeDir::X(m), 2)?;
        for k in 0..d {
            jac[k][m] = jets[k].c[1];
        }
    }
    // dE/dx = dE/dxi * (dx/dxi)^{-1}: solve J^T y = row for each row.
    let mut a = [[0.0f64; 2]; 2];
    let mut jt = [[0.0f64; 2]; 2];
    for i in 0..d {
        for j in 0..d {
            jt[i][j] = jac[j][i];
        }
    }
    for k in 0..d {
        let row = solve_small(&jt, &de_dxi[k], d)?;
        a[k][..d].copy_from_slice(&row[..d]);
    }
    for k in 0..d {
        a[k][k] += cfg.delta;
    }

    let mut rhs = [0.0f64; 2];
    for k in 0..d {
        rhs[k] = -(e0[k] / cfg.tau + ed[k].d);
    }
    solve_small(&a, &rhs, d)
}

/// Relocation loss of a mesh map over the interior points of a
/// computational-frame collocation set.
pub struct EmmObjective<'a, M: Monitor> {
    scratch: MeshMap,
    monitor: &'a M,
    points: &'a PointSet,
    cfg: EmmConfig,
}

impl<'a, M: Monitor> EmmObjective<'a, M> {
    pub fn new(
        map: &MeshMap,
        monitor: &'a M,
        points: &'a PointSet,
        cfg: EmmConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if monitor.dim() != map.dim {
            return Err(Error::DimensionMismatch {
                context: "monitor vs map dimension",
                expected: map.dim,
                got: monitor.dim(),
            });
        }
        if points.dim != map.dim {
            return Err(Error::DimensionMismatch {
                context: "mesh points vs map dimension",
                expected: map.dim,
                got: points.dim,
            });
        }
        if points.n_interior() == 0 {
            return Err(Error::Structural(
                "mesh relocation needs at least one interior collocation point".into(),
            ));
        }
        Ok(EmmObjective { scratch: map.clone(), monitor, points, cfg })
    }

    fn load_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.scratch.net.params.len() {
            return Err(Error::DimensionMismatch {
                context: "mesh parameter vector",
                expected: self.scratch.net.params.len(),
                got: params.len(),
            });
        }
        self.scratch.net.params.copy_from_slice(params);
        Ok(())
    }

    /// Velocity-form targets for every interior point at the current map;
    /// held fixed while the loss is differentiated.
    fn velocity_targets(&self) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(self.points.n_interior());
        for i in 0..self.points.n_interior() {
            let (xi, t) = self.points.interior_point(i);
            out.push(mesh_velocity(&self.scratch, self.monitor, &self.cfg, xi, t)?);
        }
        Ok(out)
    }
}

impl<M: Monitor + Sync> Objective for EmmObjective<'_, M> {
    fn dim(&self) -> usize {
        self.scratch.net.params.len()
    }

    fn value(&mut self, params: &[f64]) -> Result<f64> {
        self.load_params(params)?;
        let d = self.scratch.dim;
        let n = self.points.n_interior();
        let targets = match self.cfg.mode {
            EmmMode::Velocity => Some(self.velocity_targets()?),
            EmmMode::Location => None,
        };
        let mut total = 0.0;
        let mut chunk = 0.0;
        for i in 0..n {
            let (xi, t) = self.points.interior_point(i);
            let tprobe = self.scratch.probe::<f64>(xi, t, ProbeDir::T, 1)?;
            let mut point = 0.0;
            match &targets {
                None => {
                    let e = eep_residual::<f64>(&self.scratch, self.monitor, xi, t)?;
                    for k in 0..d {
                        let r = tprobe[k].c[1] + e[k] / self.cfg.tau;
                        point += r * r;
                    }
                }
                Some(tg) => {
                    for k in 0..d {
                        let r = tprobe[k].c[1] - tg[i][k];
                        point += r * r;
                    }
                }
            }
            chunk += point;
            if (i + 1) % CHUNK == 0 {
                total += chunk;
                chunk = 0.0;
            }
        }
        total += chunk;
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { term: "mesh relocation loss".into(), index: 0 });
        }
        Ok(loss)
    }

    fn value_grad(&mut self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.load_params(params)?;
        let n_params = self.scratch.net.params.len();
        if grad.len() != n_params {
            return Err(Error::DimensionMismatch {
                context: "mesh gradient buffer",
                expected: n_params,
                got: grad.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let d = self.scratch.dim;
        let n = self.points.n_interior();
        let targets = match self.cfg.mode {
            EmmMode::Velocity => Some(self.velocity_targets()?),
            EmmMode::Location => None,
        };

        let map = &self.scratch;
        let monitor = self.monitor;
        let points = self.points;
        let inv_tau = 1.0 / self.cfg.tau;
        let frozen_store: Vec<&[f64]> = monitor.frozen_params().into_iter().collect();

        let chunk_ranges: Vec<(usize, usize)> = {
            let mut v = Vec::new();
            let mut at = 0;
            while at < n {
                let len = CHUNK.min(n - at);
                v.push((at, len));
                at += len;
            }
            v
        };

        let record_chunk = |&(first, len): &(usize, usize)| -> Result<(f64, Vec<f64>)> {
            let cell = TapeCell::new(2);
            let mut acc: Option<Var<'_>> = None;
            for i in first..first + len {
                let (xi, t) = points.interior_point(i);
                let tjets = record_map_probe(&cell, map, xi, t, ProbeDir::T)?;
                let mut point: Option<Var<'_>> = None;
                match &targets {
                    None => {
                        let mut map_jets = Vec::with_capacity(d);
                        for j in 0..d {
                            map_jets.push(record_map_probe(&cell, map, xi, t, ProbeDir::X(j))?);
                        }
                        let x: Vec<Var<'_>> =
                            (0..d).map(|k| map_jets[0][k].deriv(0)).collect();
                        let pairs = monitor.record(&cell, t, &x, &map_jets)?;
                        for k in 0..d {
                            let mut e = cell.constant(0.0);
                            for j in 0..d {
                                e = e + (pairs[j] * map_jets[j][k].dstream()).deriv(1);
                            }
                            let r = tjets[k].deriv(1) + e.scale(inv_tau);
                            let sq = r * r;
                            point = Some(match point {
                                None => sq,
                                Some(p) => p + sq,
                            });
                        }
                    }
                    Some(tg) => {
                        for k in 0..d {
                            let r = tjets[k].deriv(1).shift(-tg[i][k]);
                            let sq = r * r;
                            point = Some(match point {
                                None => sq,
                                Some(p) => p + sq,
                            });
                        }
                    }
                }
                let term = point.expect("at least one mesh dimension").scale(1.0 / n as f64);
                acc = Some(match acc {
                    None => term,
                    Some(a) => a + term,
                });
            }
            let acc = acc.expect("chunk is nonempty");
            let loss = acc.value();
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    term: "mesh relocation loss chunk".into(),
                    index: first,
                });
            }
            let mut cgrad = vec![0.0; n_params];
            let mut adj = Vec::new();
            cell.0.borrow().backward(
                acc.id,
                &map.net.params,
                &frozen_store,
                &mut cgrad,
                &mut adj,
            );
            Ok((loss, cgrad))
        };

        let results: Result<Vec<(f64, Vec<f64>)>> = if rayon::current_num_threads() > 1 {
            chunk_ranges.par_iter().map(record_chunk).collect()
        } else {
            chunk_ranges.iter().map(record_chunk).collect()
        };
        let mut total = 0.0;
        for (loss, cgrad) in results? {
            total += loss;
            for (g, c) in grad.iter_mut().zip(cgrad.iter()) {
                *g += c;
            }
        }
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { term: "mesh relocation gradient".into(), index: 0 });
        }
        Ok(total)
    }
}

/// Record one map probe on the tape: the displacement net runs with
/// trainable rows over unit-box inputs seeded along the probed axis, the
/// boundary normalizer is recorded as node arithmetic, and the identity
/// part enters as a constant expansion.
fn record_map_probe<'t>(
    cell: &'t TapeCell,
    map: &MeshMap,
    xi: &[f64],
    t: f64,
    dir: ProbeDir,
) -> Result<Vec<Var<'t>>> {
    let d = map.dim;
    let mut svars: Vec<Var<'t>> = Vec::with_capacity(d);
    let mut ids = Vec::with_capacity(d + 1);
    for a in 0..d {
        let s = (xi[a] - map.domain.lo[a]) / map.domain.extent(a);
        let seed = match dir {
            ProbeDir::X(j) if j == a => 1.0 / map.domain.extent(a),
            _ => 0.0,
        };
        let v = cell.constant_jet([s, seed, 0.0, 0.0]);
        svars.push(v);
        ids.push(v.id);
    }
    let t_seed = if dir == ProbeDir::T { 1.0 } else { 0.0 };
    ids.push(cell.constant_jet([t, t_seed, 0.0, 0.0]).id);

    let outs = forward_on_tape_with(
        &map.net.shape,
        &map.net.params,
        &mut cell.0.borrow_mut(),
        ParamSource::Trainable,
        &ids,
    )?;
    let psi = normalizer(map.kind, &svars);
    let mut jets = Vec::with_capacity(d);
    for k in 0..d {
        let seed = match dir {
            ProbeDir::X(j) if j == k => 1.0,
            _ => 0.0,
        };
        let base = cell.constant_jet([xi[k], seed, 0.0, 0.0]);
        jets.push(base + (psi * cell.var(outs[k])).scale(map.domain.extent(k)));
    }
    Ok(jets)
}

/// Train the map against the relocation loss and leave the best parameters
/// in place.
pub fn train_mesh<M: Monitor + Sync>(
    map: &mut MeshMap,
    monitor: &M,
    points: &PointSet,
    emm: &EmmConfig,
    phase: &PhaseConfig,
) -> Result<PhaseReport> {
    let mut obj = EmmObjective::new(map, monitor, points, *emm)?;
    let mut params = map.net.params.clone();
    let report = train_phase(&mut obj, &mut params, phase)?;
    map.net.params.copy_from_slice(&params);
    Ok(report)
}

/// Identity map with a small displacement net, for building mesh stages.
pub fn identity_map(
    kind: NormalizerKind,
    domain: &Domain,
    dim: usize,
    hidden: usize,
    width: usize,
    rng: &mut impl Rng,
) -> Result<MeshMap> {
    MeshMap::identity(kind, domain.clone(), dim, hidden, width, rng)
}
