//! Quadrature-based diagnostics: discrete energy traces, error norms
//! against a reference field, and mesh-density correlation measures.

use crate::error::{Error, Result};
use crate::fields::{field_sample, FieldSource};
use crate::problems::{Domain, ProblemSpec};
use crate::sampling::PointSet;

/// Number of snapshot times used by the energy-conservation check.
pub const ENERGY_CHECK_TIMES: usize = 11;

/// Default spatial quadrature resolution per axis.
pub fn default_quad_per_axis(dim: usize) -> usize {
    if dim == 1 {
        201
    } else {
        101
    }
}

/// Inclusive trapezoid nodes and weights on `[lo, hi]`.
pub fn trapezoid_rule(lo: f64, hi: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Config(format!("quadrature needs at least 2 nodes, got {n}")));
    }
    let h = (hi - lo) / (n - 1) as f64;
    let nodes = (0..n).map(|i| lo + h * i as f64).collect();
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    Ok((nodes, weights))
}

/// Discrete energy at one time: the energy density integrated over the
/// spatial box by tensor-product trapezoid quadrature.
pub fn discrete_energy(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    t: f64,
    per_axis: usize,
) -> Result<f64> {
    let dom = &spec.domain;
    let (x0, w0) = trapezoid_rule(dom.lo[0], dom.hi[0], per_axis)?;
    let mut total = 0.0;
    if spec.dim == 1 {
        for (x, w) in x0.iter().zip(&w0) {
            let s = field_sample(spec, src, &[*x], t)?;
            total += w * spec.energy_density(&s);
        }
    } else {
        let (x1, w1) = trapezoid_rule(dom.lo[1], dom.hi[1], per_axis)?;
        for (a, wa) in x0.iter().zip(&w0) {
            for (b, wb) in x1.iter().zip(&w1) {
                let s = field_sample(spec, src, &[*a, *b], t)?;
                total += wa * wb * spec.energy_density(&s);
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite { term: format!("{} discrete energy", spec.name), index: 0 });
    }
    Ok(total)
}

/// Energy at uniformly spaced times across `[0, t_end]`.
pub fn energy_trace(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    n_times: usize,
    per_axis: usize,
) -> Result<Vec<(f64, f64)>> {
    if n_times < 2 {
        return Err(Error::Config(format!("energy trace needs at least 2 times, got {n_times}")));
    }
    let mut out = Vec::with_capacity(n_times);
    for i in 0..n_times {
        let t = spec.domain.t_end * i as f64 / (n_times - 1) as f64;
        out.push((t, discrete_energy(spec, src, t, per_axis)?));
    }
    Ok(out)
}

/// Largest deviation from the initial energy, relative to its magnitude.
pub fn max_relative_drift(trace: &[(f64, f64)]) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let h0 = trace[0].1;
    let denom = h0.abs().max(1e-12);
    trace.iter().map(|(_, h)| (h - h0).abs() / denom).fold(0.0, f64::max)
}

/// Relative space-time L2 gap between two fields on an inclusive lattice:
/// `||a - b|| / ||b||` with the reference in the denominator.
pub fn relative_l2_error(
    approx: &impl FieldSource,
    reference: &impl FieldSource,
    domain: &Domain,
    dim: usize,
    per_axis: usize,
    n_times: usize,
) -> Result<f64> {
    let (x0, _) = trapezoid_rule(domain.lo[0], domain.hi[0], per_axis)?;
    let x1 = if dim == 2 {
        trapezoid_rule(domain.lo[1], domain.hi[1], per_axis)?.0
    } else {
        vec![0.0]
    };
    if n_times < 2 {
        return Err(Error::Config(format!("error grid needs at least 2 times, got {n_times}")));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut x = [0.0f64; 2];
    for it in 0..n_times {
        let t = domain.t_end * it as f64 / (n_times - 1) as f64;
        for a in &x0 {
            x[0] = *a;
            for b in &x1 {
                x[1] = *b;
                let ua = approx.probe(&x[..dim], t, crate::problems::ProbeDir::T, 0)?[0].c[0];
                let ur = reference.probe(&x[..dim], t, crate::problems::ProbeDir::T, 0)?[0].c[0];
                num += (ua - ur) * (ua - ur);
                den += ur * ur;
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::Structural("reference field is identically zero on the grid".into()));
    }
    Ok((num / den).sqrt())
}

/// Ranks with ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("rank inputs must be ordered"));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Rank correlation coefficient of two paired samples.
pub fn spearman_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch {
            context: "rank correlation samples",
            expected: a.len().max(2),
            got: b.len(),
        });
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Structural("rank correlation of a constant sample".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Interior-point density per spatial bin, correlated against a monitor
/// profile averaged over the same bins.  Points are binned over space only
/// (all times pooled); the monitor is probed at bin centers at mid-time.
pub fn density_monitor_correlation(
    points: &PointSet,
    domain: &Domain,
    bins_per_axis: usize,
    mut monitor_at: impl FnMut(&[f64], f64) -> Result<f64>,
) -> Result<f64> {
    if bins_per_axis < 2 {
        return Err(Error::Config(format!("need at least 2 bins per axis, got {bins_per_axis}")));
    }
    let d = points.dim;
    let n_bins = bins_per_axis.pow(d as u32);
    let mut counts = vec![0.0f64; n_bins];
    for i in 0..points.n_interior() {
        let (x, _) = points.interior_point(i);
        let mut flat = 0;
        for a in 0..d {
            let f = (x[a] - domain.lo[a]) / domain.extent(a);
            let cell = ((f * bins_per_axis as f64) as usize).min(bins_per_axis - 1);
            flat = flat * bins_per_axis + cell;
        }
        counts[flat] += 1.0;
    }
    let t_mid = 0.5 * domain.t_end;
    let mut omega = vec![0.0f64; n_bins];
    let mut x = [0.0f64; 2];
    for flat in 0..n_bins {
        let mut rest = flat;
        for a in (0..d).rev() {
            let cell = rest % bins_per_axis;
            rest /= bins_per_axis;
            x[a] = domain.lo[a] + (cell as f64 + 0.5) / bins_per_axis as f64 * domain.extent(a);
        }
        omega[flat] = monitor_at(&x[..d], t_mid)?;
    }
    spearman_rank(&counts, &omega)
}
