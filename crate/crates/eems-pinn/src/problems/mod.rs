//! Benchmark problem definitions.
//!
//! Each problem is a conservative wave-type PDE posed on a space-time box,
//! written as a first-order-in-time system where applicable: the network
//! learns `(u, v)` with `v = u_t`, and the interior residual couples them.
//! Closed-form data (exact solution, initial and boundary values, forcing)
//! is written once against [`Real`] so the same formula serves plain
//! evaluation, derivative probes, and recorded tapes. Initial and boundary
//! data are derived from the exact solution where one exists, so they can
//! never drift out of sync with it.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::real::Real;

pub mod kdv_ref;

pub const PROBLEM_NAMES: [&str; 6] =
    ["kg1d", "kg1d_forced", "sg1d", "kdv1d", "wave2d", "sg2d"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Klein-Gordon kink: `u_tt - a^2 u_xx + a u - g u^3 = 0`.
    Kg1d,
    /// Forced Klein-Gordon with a manufactured solution:
    /// `u_tt - u_xx + u^3 = f`.
    Kg1dForced,
    /// Sine-Gordon kink-antikink collision: `u_tt - u_xx + sin u = 0`.
    Sg1d,
    /// Korteweg-de Vries: `u_t + 6 u u_x + u_xxx = 0`.
    Kdv1d,
    /// Linear wave equation on the unit square: `u_tt = c^2 (u_x1x1 + u_x2x2)`.
    Wave2d,
    /// Two-dimensional sine-Gordon line soliton: `u_tt - lap u + sin u = 0`.
    Sg2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Periodic,
}

/// One spatial face of the domain box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub high: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub t_end: f64,
}

impl Domain {
    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn measure(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.extent(a)).product()
    }
}

/// Physical constants; meaning depends on the problem kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Propagation speed: kink speed for the Klein-Gordon and sine-Gordon
    /// kinks, wave speed for the linear wave equation.
    pub speed: f64,
}

/// Optional user overrides applied before validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemOverrides {
    pub x_lo: Option<Vec<f64>>,
    pub x_hi: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub speed: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeDir {
    /// Time direction.
    T,
    /// Spatial axis.
    X(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub name: &'static str,
    pub dim: usize,
    pub components: usize,
    pub domain: Domain,
    pub boundary: BoundaryKind,
    pub params: PhysParams,
}

/// Derivative slots of one solution component at one point.
#[derive(Clone, Copy, Debug)]
pub struct CompDerivs<S> {
    pub val: S,
    pub dt: Option<S>,
    pub dx: [Option<S>; 2],
    pub dxx: [Option<S>; 2],
    pub dxxx: Option<S>,
}

impl<S: Real> CompDerivs<S> {
    pub fn value_only(val: S) -> Self {
        CompDerivs { val, dt: None, dx: [None; 2], dxx: [None; 2], dxxx: None }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PointDerivs<S> {
    pub u: CompDerivs<S>,
    pub v: Option<CompDerivs<S>>,
}

/// Slots the energy density reads: value, spatial gradient, time derivative.
#[derive(Clone, Copy, Debug)]
pub struct FieldSample<S> {
    pub u: S,
    pub du: [Option<S>; 2],
    pub v: Option<S>,
}

pub fn make_problem(name: &str) -> Result<ProblemSpec> {
    make_problem_with(name, &ProblemOverrides::default())
}

pub fn make_problem_with(name: &str, over: &ProblemOverrides) -> Result<ProblemSpec> {
    let (kind, static_name) = match name {
        "kg1d" => (ProblemKind::Kg1d, "kg1d"),
        "kg1d_forced" => (ProblemKind::Kg1dForced, "kg1d_forced"),
        "sg1d" => (ProblemKind::Sg1d, "sg1d"),
        "kdv1d" => (ProblemKind::Kdv1d, "kdv1d"),
        "wave2d" => (ProblemKind::Wave2d, "wave2d"),
        "sg2d" => (ProblemKind::Sg2d, "sg2d"),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    let (dim, components, domain, boundary, params) = match kind {
        ProblemKind::Kg1d => (
            1,
            2,
            Domain { lo: [-10.0, 0.0], hi: [10.0, 0.0], t_end: 12.0 },
            BoundaryKind::Neumann,
            PhysParams { alpha: 0.1, gamma: 1.0, speed: 0.3 },
        ),
        ProblemKind::Kg1dForced => (
            1,
            2,
            Domain { lo: [0.0, 0.0], hi: [1.0, 0.0], t_end: 1.0 },
            BoundaryKind::Dirichlet,
            PhysParams { alpha: 0.0, gamma: 0.0, speed: 0.0 },
        ),
        // The kink-antikink pair is analytically non-periodic; the box must be
        // wide enough that the tails are below round-off scale before periodic
        // matching of the exact solution holds to tolerance.
        ProblemKind::Sg1d => (
            1,
            2,
            Domain { lo: [-24.0, 0.0], hi: [24.0, 0.0], t_end: 1.0 },
            BoundaryKind::Periodic,
            PhysParams { alpha: 0.0, gamma: 0.0, speed: 0.5 },
        ),
        ProblemKind::Kdv1d => (
            1,
            1,
            Domain { lo: [0.0, 0.0], hi: [2.0 * std::f64::consts::PI, 0.0], t_end: 0.6 },
            BoundaryKind::Periodic,
            PhysParams { alpha: 0.0, gamma: 0.0, speed: 0.0 },
        ),
        ProblemKind::Wave2d => (
            2,
            2,
            Domain { lo: [0.0, 0.0], hi: [1.0, 1.0], t_end: 1.0 },
            BoundaryKind::Dirichlet,
            PhysParams { alpha: 0.0, gamma: 0.0, speed: 1.0 },
        ),
        ProblemKind::Sg2d => (
            2,
            2,
            Domain { lo: [-7.0, -7.0], hi: [7.0, 7.0], t_end: 10.0 },
            BoundaryKind::Neumann,
            PhysParams { alpha: 0.0, gamma: 0.0, speed: 0.0 },
        ),
    };
    let mut spec =
        ProblemSpec { kind, name: static_name, dim, components, domain, boundary, params };
    if let Some(lo) = &over.x_lo {
        if lo.len() != dim {
            return Err(invalid(name, format!("x_lo needs {dim} entries, got {}", lo.len())));
        }
        for (a, &v) in lo.iter().enumerate() {
            spec.domain.lo[a] = v;
        }
    }
    if let Some(hi) = &over.x_hi {
        if hi.len() != dim {
            return Err(invalid(name, format!("x_hi needs {dim} entries, got {}", hi.len())));
        }
        for (a, &v) in hi.iter().enumerate() {
            spec.domain.hi[a] = v;
        }
    }
    if let Some(t) = over.t_end {
        spec.domain.t_end = t;
    }
    if let Some(a) = over.alpha {
        spec.params.alpha = a;
    }
    if let Some(g) = over.gamma {
        spec.params.gamma = g;
    }
    if let Some(s) = over.speed {
        spec.params.speed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn invalid(problem: &str, message: String) -> Error {
    Error::InvalidParameter { problem: problem.to_string(), message }
}

impl ProblemSpec {
    fn validate(&self) -> Result<()> {
        for a in 0..self.dim {
            if !(self.domain.lo[a] < self.domain.hi[a]) {
                return Err(invalid(
                    self.name,
                    format!(
                        "domain axis {a} needs lo < hi, got [{}, {}]",
                        self.domain.lo[a], self.domain.hi[a]
                    ),
                ));
            }
        }
        if !(self.domain.t_end > 0.0) {
            return Err(invalid(self.name, format!("t_end must be positive, got {}", self.domain.t_end)));
        }
        match self.kind {
            ProblemKind::Kg1d => {
                let p = self.params;
                if p.alpha <= 0.0 || p.gamma <= 0.0 {
                    return Err(invalid(
                        self.name,
                        format!("alpha and gamma must be positive, got alpha={}, gamma={}", p.alpha, p.gamma),
                    ));
                }
                if p.speed * p.speed <= p.alpha * p.alpha {
                    return Err(invalid(
                        self.name,
                        format!(
                            "kink wavenumber requires speed^2 > alpha^2 (speed^2 - alpha^2 = {:.3e} <= 0)",
                            p.speed * p.speed - p.alpha * p.alpha
                        ),
                    ));
                }
            }
            ProblemKind::Sg1d => {
                let g = self.params.speed;
                if !(g.abs() < 1.0) || g == 0.0 {
                    return Err(invalid(
                        self.name,
                        format!("kink speed must satisfy 0 < |speed| < 1, got {g}"),
                    ));
                }
            }
            ProblemKind::Wave2d => {
                if self.params.speed <= 0.0 {
                    return Err(invalid(
                        self.name,
                        format!("wave speed must be positive, got {}", self.params.speed),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Probes the interior residual needs: direction and expansion order.
    pub fn interior_probes(&self) -> &'static [(ProbeDir, usize)] {
        match self.kind {
            ProblemKind::Kg1d | ProblemKind::Kg1dForced | ProblemKind::Sg1d => {
                &[(ProbeDir::T, 1), (ProbeDir::X(0), 2)]
            }
            ProblemKind::Kdv1d => &[(ProbeDir::T, 1), (ProbeDir::X(0), 3)],
            ProblemKind::Wave2d | ProblemKind::Sg2d => {
                &[(ProbeDir::T, 1), (ProbeDir::X(0), 2), (ProbeDir::X(1), 2)]
            }
        }
    }

    pub fn residual_names(&self) -> &'static [&'static str] {
        match self.kind {
            ProblemKind::Kdv1d => &["pde"],
            _ => &["pde_u", "pde_v"],
        }
    }

    /// Interior residual components. Coordinates enter as plain numbers (they
    /// are fixed collocation points); derivative slots carry the generic
    /// scalar so the same code serves evaluation and gradient recording.
    pub fn interior_residual_into<S: Real>(
        &self,
        x: &[f64],
        t: f64,
        d: &PointDerivs<S>,
        out: &mut Vec<S>,
    ) {
        out.clear();
        match self.kind {
            ProblemKind::Kg1d => {
                let p = self.params;
                let v = d.v.as_ref().expect("kg1d needs v");
                let u = d.u.val;
                out.push(d.u.dt.unwrap() - v.val);
                out.push(
                    v.dt.unwrap() - d.u.dxx[0].unwrap().scale(p.alpha * p.alpha)
                        + u.scale(p.alpha)
                        - (u * u * u).scale(p.gamma),
                );
            }
            ProblemKind::Kg1dForced => {
                let v = d.v.as_ref().expect("kg1d_forced needs v");
                let u = d.u.val;
                out.push(d.u.dt.unwrap() - v.val);
                out.push(
                    (v.dt.unwrap() - d.u.dxx[0].unwrap() + u * u * u).shift(-self.forcing(x, t)),
                );
            }
            ProblemKind::Sg1d => {
                let v = d.v.as_ref().expect("sg1d needs v");
                out.push(d.u.dt.unwrap() - v.val);
                out.push(v.dt.unwrap() - d.u.dxx[0].unwrap() + d.u.val.sin());
            }
            ProblemKind::Kdv1d => {
                out.push(
                    d.u.dt.unwrap()
                        + (d.u.val * d.u.dx[0].unwrap()).scale(6.0)
                        + d.u.dxxx.unwrap(),
                );
            }
            ProblemKind::Wave2d => {
                let c2 = self.params.speed * self.params.speed;
                let v = d.v.as_ref().expect("wave2d needs v");
                out.push(d.u.dt.unwrap() - v.val);
                out.push(
                    v.dt.unwrap() - (d.u.dxx[0].unwrap() + d.u.dxx[1].unwrap()).scale(c2),
                );
            }
            ProblemKind::Sg2d => {
                let v = d.v.as_ref().expect("sg2d needs v");
                out.push(d.u.dt.unwrap() - v.val);
                out.push(
                    v.dt.unwrap() - d.u.dxx[0].unwrap() - d.u.dxx[1].unwrap() + d.u.val.sin(),
                );
            }
        }
    }

    /// First-integral density evaluated on a field sample. For the forced
    /// problem this is the zero-forcing density, reported as non-conserved.
    pub fn energy_density<S: Real>(&self, f: &FieldSample<S>) -> S {
        match self.kind {
            ProblemKind::Kg1d => {
                let p = self.params;
                let v = f.v.expect("kg1d density needs v");
                let ux = f.du[0].expect("kg1d density needs u_x");
                let u2 = f.u * f.u;
                (v * v - (ux * ux).scale(p.alpha * p.alpha) + u2.scale(p.alpha)
                    - (u2 * u2).scale(0.5 * p.gamma))
                .scale(0.5)
            }
            ProblemKind::Kg1dForced => {
                let v = f.v.expect("density needs v");
                let ux = f.du[0].expect("density needs u_x");
                let u2 = f.u * f.u;
                (v * v + ux * ux).scale(0.5) + (u2 * u2).scale(0.25)
            }
            ProblemKind::Sg1d => {
                let v = f.v.expect("density needs v");
                let ux = f.du[0].expect("density needs u_x");
                (v * v + ux * ux).scale(0.5) + (-f.u.cos()).shift(1.0)
            }
            ProblemKind::Kdv1d => {
                let ux = f.du[0].expect("density needs u_x");
                (ux * ux).scale(0.5) - f.u * f.u * f.u
            }
            ProblemKind::Wave2d => {
                let v = f.v.expect("density needs v");
                let ux = f.du[0].expect("density needs u_x1");
                let uy = f.du[1].expect("density needs u_x2");
                (v * v + ux * ux + uy * uy).scale(0.5)
            }
            ProblemKind::Sg2d => {
                let v = f.v.expect("density needs v");
                let ux = f.du[0].expect("density needs u_x1");
                let uy = f.du[1].expect("density needs u_x2");
                (v * v + ux * ux + uy * uy).scale(0.5) + (-f.u.cos()).shift(1.0)
            }
        }
    }

    pub fn has_exact(&self) -> bool {
        self.kind != ProblemKind::Kdv1d
    }

    /// Closed-form solution `u(x, t)` where one exists.
    pub fn exact_u<S: Real>(&self, x: &[S], t: S) -> Option<S> {
        match self.kind {
            ProblemKind::Kg1d => {
                let p = self.params;
                let amp = (p.alpha / p.gamma).sqrt();
                let kappa =
                    (p.alpha / (2.0 * (p.speed * p.speed - p.alpha * p.alpha))).sqrt();
                Some((x[0] - t.scale(p.speed)).scale(kappa).tanh().scale(amp))
            }
            ProblemKind::Kg1dForced => {
                let c5 = 5.0 * std::f64::consts::PI;
                let xt = x[0] * t;
                Some(x[0] * t.scale(c5).cos() + xt * xt * xt)
            }
            ProblemKind::Sg1d => {
                let g = self.params.speed;
                let r = 1.0 / (1.0 - g * g).sqrt();
                let num = t.scale(g * r).sinh();
                let den = x[0].scale(r).cosh().scale(g);
                Some((num / den).atan().scale(4.0))
            }
            ProblemKind::Kdv1d => None,
            ProblemKind::Wave2d => {
                let pi = std::f64::consts::PI;
                let wt = std::f64::consts::SQRT_2 * pi * self.params.speed;
                Some(x[0].scale(pi).sin() * x[1].scale(pi).sin() * t.scale(wt).cos())
            }
            ProblemKind::Sg2d => Some((x[0] + x[1] - t).exp().atan().scale(4.0)),
        }
    }

    /// Initial displacement `u(x, 0)`.
    pub fn initial_u(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Kdv1d => x[0].sin(),
            _ => {
                let xs: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
                self.exact_u(&xs, Jet::constant(0.0)).unwrap().c[0]
            }
        }
    }

    /// Initial velocity `u_t(x, 0)`, absent for scalar first-order problems.
    pub fn initial_v(&self, x: &[f64]) -> Option<f64> {
        if self.components < 2 {
            return None;
        }
        let xs: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
        Some(self.exact_u(&xs, Jet::variable(0.0, 1.0)).unwrap().deriv(1))
    }

    /// Dirichlet boundary value, taken from the exact solution.
    pub fn dirichlet_value(&self, x: &[f64], t: f64) -> f64 {
        let xs: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
        self.exact_u(&xs, Jet::constant(t)).expect("no closed form for boundary data").c[0]
    }

    /// Neumann boundary value: the axis derivative of the exact solution on
    /// the face (not flipped to the outward normal).
    pub fn neumann_value(&self, face: Face, x: &[f64], t: f64) -> f64 {
        let xs: Vec<Jet> = x
            .iter()
            .enumerate()
            .map(|(a, &c)| Jet::variable(c, if a == face.axis { 1.0 } else { 0.0 }))
            .collect();
        self.exact_u(&xs, Jet::constant(t)).expect("no closed form for boundary data").deriv(1)
    }

    /// Source term; nonzero only for the manufactured forced problem, where
    /// it is derived from the target solution `u = x cos(5 pi t) + (x t)^3`.
    pub fn forcing(&self, x: &[f64], t: f64) -> f64 {
        match self.kind {
            ProblemKind::Kg1dForced => {
                let pi = std::f64::consts::PI;
                let c5 = 5.0 * pi;
                let u = x[0] * (c5 * t).cos() + (x[0] * t).powi(3);
                let u_tt = -c5 * c5 * x[0] * (c5 * t).cos() + 6.0 * x[0].powi(3) * t;
                let u_xx = 6.0 * x[0] * t.powi(3);
                u_tt - u_xx + u * u * u
            }
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn all_names_build() {
        for name in PROBLEM_NAMES {
            let p = make_problem(name).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(matches!(make_problem("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn kink_speed_constraint_is_named() {
        let over = ProblemOverrides { speed: Some(0.05), ..Default::default() };
        let err = make_problem_with("kg1d", &over).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("speed^2 > alpha^2"), "got: {msg}");
    }

    #[test]
    fn exact_solution_spot_values() {
        let kg = make_problem("kg1d").unwrap();
        assert_eq!(kg.exact_u(&[0.0], 0.0).unwrap(), 0.0);
        let sg2 = make_problem("sg2d").unwrap();
        assert_relative_eq!(
            sg2.exact_u(&[0.0, 0.0], 0.0).unwrap(),
            std::f64::consts::PI,
            max_relative = 1e-15
        );
        let w = make_problem("wave2d").unwrap();
        assert_relative_eq!(w.exact_u(&[0.5, 0.5], 0.0).unwrap(), 1.0, max_relative = 1e-15);
        let sg1 = make_problem("sg1d").unwrap();
        assert_eq!(sg1.exact_u(&[3.0], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn initial_velocity_matches_hand_derivation() {
        // For the kink-antikink start: u_t(x, 0) = 4 r sech(r x), r = 1/sqrt(1-g^2).
        let sg1 = make_problem("sg1d").unwrap();
        let g: f64 = 0.5;
        let r = 1.0 / (1.0 - g * g).sqrt();
        for x in [-2.0, -0.3, 0.0, 1.7] {
            let expect = 4.0 * r / (r * x).cosh();
            assert_relative_eq!(sg1.initial_v(&[x]).unwrap(), expect, max_relative = 1e-13);
        }
        // Klein-Gordon kink: u_t(x,0) = -c sqrt(alpha/gamma) kappa sech^2(kappa x).
        let kg = make_problem("kg1d").unwrap();
        let (a, c) = (0.1f64, 0.3f64);
        let kappa = (a / (2.0 * (c * c - a * a))).sqrt();
        for x in [-1.0, 0.0, 0.4] {
            let sech = 1.0 / (kappa * x).cosh();
            let expect = -c * a.sqrt() * kappa * sech * sech;
            assert_relative_eq!(kg.initial_v(&[x]).unwrap(), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn energy_density_spot_values() {
        // KdV density at u = sin x, x = pi: 0.5 cos^2 - sin^3 = 0.5.
        let kdv = make_problem("kdv1d").unwrap();
        let x = std::f64::consts::PI;
        let s = kdv.energy_density(&FieldSample {
            u: x.sin(),
            du: [Some(x.cos()), None],
            v: None,
        });
        assert_relative_eq!(s, 0.5, max_relative = 1e-12);

        // 2D wave exact solution at (0.5, 0.5, 0): all slots vanish.
        let w = make_problem("wave2d").unwrap();
        let pi = std::f64::consts::PI;
        let ux = pi * (pi * 0.5).cos() * (pi * 0.5).sin();
        let s = w.energy_density(&FieldSample {
            u: 1.0,
            du: [Some(ux), Some(ux)],
            v: Some(0.0),
        });
        assert_relative_eq!(s, 0.0, epsilon = 1e-25);
    }

    #[test]
    fn neumann_data_matches_closed_form() {
        // 2D sine-Gordon: du/dx1 = 4 e^{x1+x2+t} / (e^{2t} + e^{2(x1+x2)}).
        let sg2 = make_problem("sg2d").unwrap();
        let (x1, x2, t) = (7.0, 0.3, 2.0);
        let expect = 4.0 * (x1 + x2 + t).exp() / ((2.0 * t).exp() + (2.0 * (x1 + x2)).exp());
        let got = sg2.neumann_value(Face { axis: 0, high: true }, &[x1, x2], t);
        assert_relative_eq!(got, expect, max_relative = 1e-12);

        // Klein-Gordon kink: u_x = sqrt(alpha/gamma) kappa sech^2(kappa (x - c t)).
        let kg = make_problem("kg1d").unwrap();
        let (a, c, t) = (0.1f64, 0.3f64, 5.0);
        let kappa = (a / (2.0 * (c * c - a * a))).sqrt();
        let sech = 1.0 / (kappa * (10.0 - c * t)).cosh();
        let expect = a.sqrt() * kappa * sech * sech;
        let got = kg.neumann_value(Face { axis: 0, high: true }, &[10.0], t);
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }
}
