//! Uniform access to solution fields.
//!
//! Residuals, energies, and samplers all consume fields through directional
//! Taylor probes, so a trained network, a closed-form solution, and the
//! tabulated KdV reference are interchangeable. Component 0 is always the
//! displacement `u`; for wave systems component 1 is the velocity `v = u_t`.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::network::DenseNetwork;
use crate::problems::kdv_ref::KdvReference;
use crate::problems::{CompDerivs, FieldSample, PointDerivs, ProbeDir, ProblemSpec};
use crate::real::Dual;

pub trait FieldSource {
    fn components(&self) -> usize;

    /// Taylor expansion of every component along `dir` up to `order <= 3`.
    fn probe(&self, x: &[f64], t: f64, dir: ProbeDir, order: usize) -> Result<Vec<Jet>>;
}

/// A trained network evaluated on raw space-time inputs `(x_1..x_d, t)`.
impl<T: FieldSource + ?Sized> FieldSource for &T {
    fn components(&self) -> usize {
        (**self).components()
    }

    fn probe(&self, x: &[f64], t: f64, dir: ProbeDir, order: usize) -> Result<Vec<Jet>> {
        (**self).probe(x, t, dir, order)
    }
}

pub struct NetSource<'a> {
    pub net: &'a DenseNetwork,
}

impl FieldSource for NetSource<'_> {
    fn components(&self) -> usize {
        self.net.shape.n_out()
    }

    fn probe(&self, x: &[f64], t: f64, dir: ProbeDir, order: usize) -> Result<Vec<Jet>> {
        let dim = x.len();
        let mut input = Vec::with_capacity(dim + 1);
        input.extend_from_slice(x);
        input.push(t);
        let mut d = vec![0.0; dim + 1];
        match dir {
            ProbeDir::T => d[dim] = 1.0,
            ProbeDir::X(a) => {
                if a >= dim {
                    return Err(Error::DimensionMismatch {
                        context: "net probe axis",
                        expected: dim,
                        got: a + 1,
                    });
                }
                d[a] = 1.0;
            }
        }
        self.net.probe(&input, &d, order)
    }
}

/// The closed-form solution of a benchmark, with the velocity component and
/// its derivatives obtained by carrying a time tangent through the formula.
pub struct ExactSource<'a> {
    pub spec: &'a ProblemSpec,
}

impl FieldSource for ExactSource<'_> {
    fn components(&self) -> usize {
        self.spec.components
    }

    fn probe(&self, x: &[f64], t: f64, dir: ProbeDir, order: usize) -> Result<Vec<Jet>> {
        if !self.spec.has_exact() {
            return Err(Error::NoExactSolution(self.spec.name.to_string()));
        }
        if order > crate::jet::MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        let u = {
            let xs: Vec<Jet> = x
                .iter()
                .enumerate()
                .map(|(a, &c)| Jet::variable(c, if dir == ProbeDir::X(a) { 1.0 } else { 0.0 }))
                .collect();
            let tj = Jet::variable(t, if dir == ProbeDir::T { 1.0 } else { 0.0 });
            self.spec.exact_u(&xs, tj).unwrap()
        };
        if self.spec.components == 1 {
            return Ok(vec![u]);
        }
        // v = u_t: run the same formula over jets of duals, where the dual
        // tangent is time; the dual part of each jet coefficient is then the
        // matching coefficient of v's expansion along `dir`.
        let v = {
            let xs: Vec<Jet<Dual>> = x
                .iter()
                .enumerate()
                .map(|(a, &c)| {
                    let dirc = if dir == ProbeDir::X(a) { 1.0 } else { 0.0 };
                    Jet::lift_dir(Dual { v: c, d: 0.0 }, dirc)
                })
                .collect();
            let t0 = Dual { v: t, d: 1.0 };
            let t_dir = if dir == ProbeDir::T { 1.0 } else { 0.0 };
            let full = self.spec.exact_u(&xs, Jet::lift_dir(t0, t_dir)).unwrap();
            Jet::from_coeffs([full.c[0].d, full.c[1].d, full.c[2].d, full.c[3].d])
        };
        Ok(vec![u, v])
    }
}

/// The tabulated KdV reference solution.
pub struct KdvSource<'a> {
    pub reference: &'a KdvReference,
}

impl FieldSource for KdvSource<'_> {
    fn components(&self) -> usize {
        1
    }

    fn probe(&self, x: &[f64], t: f64, dir: ProbeDir, order: usize) -> Result<Vec<Jet>> {
        let e = self.reference.eval_derivs(x[0], t)?;
        let c = match dir {
            ProbeDir::X(0) => [e.u, e.ux, e.uxx / 2.0, e.uxxx / 6.0],
            ProbeDir::T => {
                if order > 1 {
                    return Err(Error::UnsupportedOrder(order));
                }
                [e.u, e.ut, 0.0, 0.0]
            }
            ProbeDir::X(a) => {
                return Err(Error::DimensionMismatch {
                    context: "kdv probe axis",
                    expected: 1,
                    got: a + 1,
                })
            }
        };
        Ok(vec![Jet::from_coeffs(c)])
    }
}

/// Gather every derivative slot the interior residual of `spec` reads.
pub fn point_derivs(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    x: &[f64],
    t: f64,
) -> Result<PointDerivs<f64>> {
    let mut u = CompDerivs::value_only(0.0);
    let mut v: Option<CompDerivs<f64>> =
        (spec.components == 2).then(|| CompDerivs::value_only(0.0));
    let mut value_set = false;
    for &(dir, order) in spec.interior_probes() {
        let jets = src.probe(x, t, dir, order)?;
        if jets.len() != spec.components {
            return Err(Error::DimensionMismatch {
                context: "field probe components",
                expected: spec.components,
                got: jets.len(),
            });
        }
        if !value_set {
            u.val = jets[0].c[0];
            if let Some(vv) = v.as_mut() {
                vv.val = jets[1].c[0];
            }
            value_set = true;
        }
        match dir {
            ProbeDir::T => {
                u.dt = Some(jets[0].deriv(1));
                if let Some(vv) = v.as_mut() {
                    vv.dt = Some(jets[1].deriv(1));
                }
            }
            ProbeDir::X(a) => {
                u.dx[a] = Some(jets[0].deriv(1));
                if order >= 2 {
                    u.dxx[a] = Some(jets[0].deriv(2));
                }
                if order >= 3 {
                    u.dxxx = Some(jets[0].deriv(3));
                }
            }
        }
    }
    Ok(PointDerivs { u, v })
}

/// Gather the slots the energy density reads: value, gradient, velocity.
pub fn field_sample(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    x: &[f64],
    t: f64,
) -> Result<FieldSample<f64>> {
    let mut s = FieldSample { u: 0.0, du: [None, None], v: None };
    for a in 0..spec.dim {
        let jets = src.probe(x, t, ProbeDir::X(a), 1)?;
        if a == 0 {
            s.u = jets[0].c[0];
            if spec.components == 2 {
                s.v = Some(jets[1].c[0]);
            }
        }
        s.du[a] = Some(jets[0].deriv(1));
    }
    Ok(s)
}

/// Interior residual of a field at one point.
pub fn residual_at(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    x: &[f64],
    t: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    let d = point_derivs(spec, src, x, t)?;
    spec.interior_residual_into(x, t, &d, out);
    for (i, r) in out.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFinite { term: format!("{} residual", spec.name), index: i });
        }
    }
    Ok(())
}
