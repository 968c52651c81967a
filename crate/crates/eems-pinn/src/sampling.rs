//! Collocation point management.
//!
//! Provides structured and random point initialization, the
//! boundary-constrained coordinate map that relocates collocation points
//! without moving the boundary, and the gradient-weighted resampling
//! baseline. Points are stored flattened, `dim + 1` values per point with
//! time last.

use crate::error::{Error, Result};
use crate::network::{DenseNetwork, ProbeScratch};
use crate::problems::{Domain, Face};
use crate::real::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Which coordinate frame a point set lives in: the computational frame is
/// the input of the mesh map, the physical frame is where the PDE is posed.
/// The two share the same box; the flag records whether the set has been
/// pushed through a mesh map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Computational,
    Physical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Grid,
    Random,
}

#[derive(Clone, Debug)]
pub struct PointSet {
    pub dim: usize,
    pub frame: Frame,
    /// Interior space-time points.
    pub interior: Vec<f64>,
    /// Initial-time points, stored with their explicit t = 0.
    pub initial: Vec<f64>,
    /// Spatial boundary points, tagged with their face.
    pub boundary: Vec<f64>,
    pub faces: Vec<Face>,
    /// Set when a grid layout could not match the requested count exactly.
    pub grid_warning: Option<String>,
}

impl PointSet {
    pub fn stride(&self) -> usize {
        self.dim + 1
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len() / self.stride()
    }

    pub fn n_initial(&self) -> usize {
        self.initial.len() / self.stride()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len() / self.stride()
    }

    pub fn interior_point(&self, i: usize) -> (&[f64], f64) {
        split_point(&self.interior, self.dim, i)
    }

    pub fn initial_point(&self, i: usize) -> (&[f64], f64) {
        split_point(&self.initial, self.dim, i)
    }

    pub fn boundary_point(&self, i: usize) -> (&[f64], f64, Face) {
        let (x, t) = split_point(&self.boundary, self.dim, i);
        (x, t, self.faces[i])
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    /// Structural invariants: points inside the closed domain, initial points
    /// at t = 0, boundary points exactly on their tagged face.
    pub fn check(&self, domain: &Domain) -> Result<()> {
        let d = self.dim;
        if self.interior.len() % (d + 1) != 0
            || self.initial.len() % (d + 1) != 0
            || self.boundary.len() % (d + 1) != 0
            || self.faces.len() != self.n_boundary()
        {
            return Err(Error::Structural("point set length mismatch".into()));
        }
        let inside = |x: &[f64], t: f64| {
            (0..d).all(|a| x[a] >= domain.lo[a] && x[a] <= domain.hi[a])
                && (0.0..=domain.t_end).contains(&t)
        };
        for i in 0..self.n_interior() {
            let (x, t) = self.interior_point(i);
            if !inside(x, t) {
                return Err(Error::Structural(format!("interior point {i} outside domain")));
            }
        }
        for i in 0..self.n_initial() {
            let (x, t) = self.initial_point(i);
            if !inside(x, t) || t != 0.0 {
                return Err(Error::Structural(format!("initial point {i} invalid")));
            }
        }
        for i in 0..self.n_boundary() {
            let (x, t, f) = self.boundary_point(i);
            let wall = if f.high { domain.hi[f.axis] } else { domain.lo[f.axis] };
            if !inside(x, t) || x[f.axis] != wall {
                return Err(Error::Structural(format!("boundary point {i} off its face")));
            }
        }
        Ok(())
    }
}

fn split_point(buf: &[f64], dim: usize, i: usize) -> (&[f64], f64) {
    let s = dim + 1;
    (&buf[i * s..i * s + dim], buf[i * s + dim])
}

/// Factor `n` into `axes` per-axis counts whose product is as close to `n`
/// as possible with near-equal counts; extra resolution goes to early axes.
pub fn near_square_counts(n: usize, axes: usize) -> Vec<usize> {
    let base = (n as f64).powf(1.0 / axes as f64).floor().max(1.0) as usize;
    let mut best: Option<(usize, Vec<usize>)> = None;
    for mask in 0u32..(1 << axes) {
        let counts: Vec<usize> =
            (0..axes).map(|a| base + ((mask >> a) & 1) as usize).collect();
        let p: usize = counts.iter().product();
        let diff = p.abs_diff(n);
        let better = match &best {
            None => true,
            Some((d, c)) => diff < *d || (diff == *d && counts > *c),
        };
        if better {
            best = Some((diff, counts));
        }
    }
    best.unwrap().1
}

/// Initial collocation sets. Grid layouts place points at interior offsets
/// `(i+1)/(count+1)` per axis, so no generated point touches a face or the
/// initial slice twice; random layouts draw uniformly. Boundary points are
/// split evenly over the faces.
pub fn uniform_points(
    domain: &Domain,
    dim: usize,
    n_p: usize,
    n_i: usize,
    n_b: usize,
    layout: Layout,
    seed: u64,
) -> Result<PointSet> {
    if n_p < 1 || n_i < 1 || n_b < 1 {
        return Err(Error::InvalidParameter {
            problem: "sampling".into(),
            message: format!("all point counts must be >= 1, got N_p={n_p}, N_i={n_i}, N_b={n_b}"),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut set = PointSet {
        dim,
        frame: Frame::Computational,
        interior: Vec::with_capacity(n_p * (dim + 1)),
        initial: Vec::with_capacity(n_i * (dim + 1)),
        boundary: Vec::with_capacity(n_b * (dim + 1)),
        faces: Vec::with_capacity(n_b),
        grid_warning: None,
    };
    let n_faces = 2 * dim;
    match layout {
        Layout::Grid => {
            let mut warnings = Vec::new();
            // Interior: near-square space-time lattice.
            let counts = near_square_counts(n_p, dim + 1);
            let total: usize = counts.iter().product();
            if total != n_p {
                warnings.push(format!(
                    "interior grid uses {total} points ({counts:?}) for requested {n_p}"
                ));
            }
            let mut idx = vec![0usize; dim + 1];
            loop {
                for a in 0..dim {
                    set.interior.push(interior_offset(domain.lo[a], domain.extent(a), idx[a], counts[a]));
                }
                set.interior
                    .push(interior_offset(0.0, domain.t_end, idx[dim], counts[dim]));
                if !advance(&mut idx, &counts) {
                    break;
                }
            }
            // Initial slice: near-square spatial lattice at t = 0.
            let icounts = near_square_counts(n_i, dim);
            let itotal: usize = icounts.iter().product();
            if itotal != n_i {
                warnings.push(format!(
                    "initial grid uses {itotal} points ({icounts:?}) for requested {n_i}"
                ));
            }
            let mut idx = vec![0usize; dim];
            loop {
                for a in 0..dim {
                    set.initial.push(interior_offset(domain.lo[a], domain.extent(a), idx[a], icounts[a]));
                }
                set.initial.push(0.0);
                if !advance(&mut idx, &icounts) {
                    break;
                }
            }
            // Boundary: even split over faces, lattice over the free
            // coordinates of each face (tangential axes and time).
            for f in 0..n_faces {
                let q = n_b / n_faces + usize::from(f < n_b % n_faces);
                if q == 0 {
                    continue;
                }
                let face = Face { axis: f / 2, high: f % 2 == 1 };
                let free: Vec<usize> = (0..dim).filter(|&a| a != face.axis).collect();
                let fcounts = near_square_counts(q, free.len() + 1);
                let ftotal: usize = fcounts.iter().product();
                if ftotal != q {
                    warnings.push(format!(
                        "face {f} grid uses {ftotal} points ({fcounts:?}) for requested {q}"
                    ));
                }
                let mut idx = vec![0usize; free.len() + 1];
                loop {
                    let mut x = [0.0f64; 2];
                    x[face.axis] =
                        if face.high { domain.hi[face.axis] } else { domain.lo[face.axis] };
                    for (j, &a) in free.iter().enumerate() {
                        x[a] = interior_offset(domain.lo[a], domain.extent(a), idx[j], fcounts[j]);
                    }
                    set.boundary.extend_from_slice(&x[..dim]);
                    set.boundary.push(interior_offset(
                        0.0,
                        domain.t_end,
                        idx[free.len()],
                        fcounts[free.len()],
                    ));
                    set.faces.push(face);
                    if !advance(&mut idx, &fcounts) {
                        break;
                    }
                }
            }
            if !warnings.is_empty() {
                let joined = warnings.join("; ");
                log::warn!("{joined}");
                set.grid_warning = Some(joined);
            }
        }
        Layout::Random => {
            for _ in 0..n_p {
                for a in 0..dim {
                    set.interior
                        .push(domain.lo[a] + rng.gen::<f64>() * domain.extent(a));
                }
                set.interior.push(rng.gen::<f64>() * domain.t_end);
            }
            for _ in 0..n_i {
                for a in 0..dim {
                    set.initial.push(domain.lo[a] + rng.gen::<f64>() * domain.extent(a));
                }
                set.initial.push(0.0);
            }
            for f in 0..n_faces {
                let q = n_b / n_faces + usize::from(f < n_b % n_faces);
                let face = Face { axis: f / 2, high: f % 2 == 1 };
                for _ in 0..q {
                    let mut x = [0.0f64; 2];
                    for a in 0..dim {
                        x[a] = if a == face.axis {
                            if face.high { domain.hi[a] } else { domain.lo[a] }
                        } else {
                            domain.lo[a] + rng.gen::<f64>() * domain.extent(a)
                        };
                    }
                    set.boundary.extend_from_slice(&x[..dim]);
                    set.boundary.push(rng.gen::<f64>() * domain.t_end);
                    set.faces.push(face);
                }
            }
        }
    }
    set.check(domain)?;
    Ok(set)
}

fn interior_offset(lo: f64, extent: f64, i: usize, count: usize) -> f64 {
    lo + extent * (i + 1) as f64 / (count + 1) as f64
}

fn advance(idx: &mut [usize], counts: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < counts[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// One-dimensional boundary vanishing factors on the unit interval,
/// combined across axes by product in higher dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizerKind {
    /// `s (1 - s)`.
    ProductForm,
    /// `s + (1 - s) - sqrt(s^2 + (1 - s)^2)`.
    REquivalence,
    /// `s (1 - s) / sqrt(s^2 + (1 - s)^2)`.
    NormalizedProduct,
}

pub fn normalizer_axis<S: Real>(kind: NormalizerKind, s: S) -> S {
    let o = (-s).shift(1.0);
    match kind {
        NormalizerKind::ProductForm => s * o,
        NormalizerKind::REquivalence => (-(s * s + o * o).sqrt()).shift(1.0),
        NormalizerKind::NormalizedProduct => s * o * (s * s + o * o).sqrt().recip(),
    }
}

/// Product of per-axis factors; exactly zero whenever any coordinate sits on
/// a face of the unit box.
pub fn normalizer<S: Real>(kind: NormalizerKind, s: &[S]) -> S {
    let mut acc = normalizer_axis(kind, s[0]);
    for &si in &s[1..] {
        acc = acc * normalizer_axis(kind, si);
    }
    acc
}

/// Boundary-constrained coordinate map. The network sees unit-box spatial
/// coordinates plus raw time and produces a displacement field which is
/// multiplied by the normalizer, so faces are fixed points of the map by
/// construction (exactly, in floating point, since the normalizer factors
/// are exactly zero there).
#[derive(Clone, Debug)]
pub struct MeshMap {
    pub net: DenseNetwork,
    pub kind: NormalizerKind,
    pub domain: Domain,
    pub dim: usize,
}

impl MeshMap {
    pub fn new(net: DenseNetwork, kind: NormalizerKind, domain: Domain, dim: usize) -> Result<Self> {
        if net.shape.n_in() != dim + 1 {
            return Err(Error::DimensionMismatch {
                context: "mesh net input",
                expected: dim + 1,
                got: net.shape.n_in(),
            });
        }
        if net.shape.n_out() != dim {
            return Err(Error::DimensionMismatch {
                context: "mesh net output",
                expected: dim,
                got: net.shape.n_out(),
            });
        }
        Ok(MeshMap { net, kind, domain, dim })
    }

    /// Fresh map starting at the identity: hidden layers are randomly
    /// initialized but the output layer is zeroed, so the displacement is
    /// exactly zero until training moves it.
    pub fn identity(
        kind: NormalizerKind,
        domain: Domain,
        dim: usize,
        hidden: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shape = crate::network::NetShape::rectangle(dim + 1, hidden, width, dim)?;
        let mut net = DenseNetwork::glorot(shape, rng);
        net.zero_output_layer();
        MeshMap::new(net, kind, domain, dim)
    }

    /// Pull a physical-frame coordinate back to the unit box.
    pub fn unit_coords(&self, xi: &[f64], s: &mut [f64]) {
        for a in 0..self.dim {
            s[a] = (xi[a] - self.domain.lo[a]) / self.domain.extent(a);
        }
    }

    /// Map one computational point to its physical location.
    pub fn map_point(&self, xi: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let mut s = [0.0f64; 2];
        self.unit_coords(xi, &mut s[..self.dim]);
        let mut input = [0.0f64; 3];
        input[..self.dim].copy_from_slice(&s[..self.dim]);
        input[self.dim] = t;
        let mut disp = Vec::with_capacity(self.dim);
        self.net.eval(&input[..=self.dim], &mut disp)?;
        let psi = normalizer(self.kind, &s[..self.dim]);
        for a in 0..self.dim {
            out[a] = xi[a] + self.domain.extent(a) * psi * disp[a];
        }
        Ok(())
    }
}

/// Push a computational point set through the map: interior and initial
/// points move (initial at their stored t = 0), boundary points are copied
/// untouched. Mapped points that left the closed domain are clamped back and
/// counted in the log.
pub fn map_points(mesh: &MeshMap, points: &PointSet) -> Result<PointSet> {
    let d = points.dim;
    let mut out = points.clone();
    out.frame = Frame::Physical;
    let mut clamped = 0usize;
    let mut mapped = [0.0f64; 2];
    for (buf, n) in [(&mut out.interior, points.n_interior()), (&mut out.initial, points.n_initial())]
    {
        for i in 0..n {
            let (xi, t) = split_point(buf, d, i);
            let xi = xi.to_vec();
            mesh.map_point(&xi, t, &mut mapped[..d])?;
            for a in 0..d {
                let c = mapped[a].clamp(mesh.domain.lo[a], mesh.domain.hi[a]);
                if c != mapped[a] {
                    clamped += 1;
                }
                buf[i * (d + 1) + a] = c;
            }
        }
    }
    if clamped > 0 {
        log::info!("clamped {clamped} mapped coordinates back into the domain");
    }
    out.check(&mesh.domain)?;
    Ok(out)
}

/// Interior points drawn from a density proportional to `w^k`, with
/// `w = sqrt(1 + |grad u|^2)` including space and time components of the
/// gradient, by rejection sampling against the uniform proposal.
pub struct WamSample {
    /// Flattened interior points, `dim + 1` values per point.
    pub points: Vec<f64>,
    /// Monte Carlo estimate of the normalization `int w^k`.
    pub z_estimate: f64,
    pub envelope_refreshes: usize,
}

pub fn wam_resample(
    net: &DenseNetwork,
    domain: &Domain,
    dim: usize,
    n_p: usize,
    k: f64,
    seed: u64,
) -> Result<WamSample> {
    if k < 1.0 {
        return Err(Error::InvalidParameter {
            problem: "wam".into(),
            message: format!("exponent k must be >= 1, got {k}"),
        });
    }
    if net.shape.n_in() != dim + 1 {
        return Err(Error::DimensionMismatch {
            context: "wam solution net input",
            expected: dim + 1,
            got: net.shape.n_in(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = dim + 1;
    let mut scratch = ProbeScratch::default();
    let mut probe_out = Vec::new();
    let mut dirbuf = vec![0.0f64; m];
    let weight = |pt: &[f64],
                      scratch: &mut ProbeScratch,
                      probe_out: &mut Vec<crate::jet::raw::J4>,
                      dirbuf: &mut [f64]|
     -> Result<f64> {
        let mut g2 = 0.0;
        for a in 0..m {
            dirbuf.fill(0.0);
            dirbuf[a] = 1.0;
            net.probe_into(pt, dirbuf, 1, scratch, probe_out)?;
            let d = probe_out[0][1];
            g2 += d * d;
        }
        Ok((1.0 + g2).sqrt())
    };

    // Envelope from a structured probe of the space-time box (faces included:
    // the maximum is often attained there).
    let counts = near_square_counts(10_000, m);
    let mut idx = vec![0usize; m];
    let mut envelope: f64 = 0.0;
    let mut pt = vec![0.0f64; m];
    loop {
        for a in 0..dim {
            pt[a] = domain.lo[a]
                + domain.extent(a) * frac_inclusive(idx[a], counts[a]);
        }
        pt[dim] = domain.t_end * frac_inclusive(idx[dim], counts[dim]);
        envelope = envelope.max(weight(&pt, &mut scratch, &mut probe_out, &mut dirbuf)?.powf(k));
        if !advance(&mut idx, &counts) {
            break;
        }
    }
    if !envelope.is_finite() || envelope <= 0.0 {
        return Err(Error::NonFinite { term: "wam envelope".into(), index: 0 });
    }

    // Normalization estimate, plain Monte Carlo.
    let volume = domain.measure(dim) * domain.t_end;
    let z_samples = 2000;
    let mut z_acc = 0.0;
    for _ in 0..z_samples {
        for a in 0..dim {
            pt[a] = domain.lo[a] + rng.gen::<f64>() * domain.extent(a);
        }
        pt[dim] = rng.gen::<f64>() * domain.t_end;
        z_acc += weight(&pt, &mut scratch, &mut probe_out, &mut dirbuf)?.powf(k);
    }
    let z_estimate = volume * z_acc / z_samples as f64;

    let mut points = Vec::with_capacity(n_p * m);
    let mut refreshes = 0usize;
    let mut draws = 0usize;
    while points.len() < n_p * m {
        draws += 1;
        if draws > 20_000_000 {
            return Err(Error::Structural(
                "gradient-weighted resampler exceeded its draw budget".into(),
            ));
        }
        for a in 0..dim {
            pt[a] = domain.lo[a] + rng.gen::<f64>() * domain.extent(a);
        }
        pt[dim] = rng.gen::<f64>() * domain.t_end;
        let wk = weight(&pt, &mut scratch, &mut probe_out, &mut dirbuf)?.powf(k);
        if wk > envelope {
            // The probe grid missed the true maximum; enlarge and restart so
            // already-accepted points are not biased toward the old envelope.
            envelope = wk * 1.05;
            refreshes += 1;
            log::warn!("resampling envelope refreshed to {envelope:.6e} after {draws} draws");
            points.clear();
            continue;
        }
        if rng.gen::<f64>() * envelope <= wk {
            points.extend_from_slice(&pt);
        }
    }
    Ok(WamSample { points, z_estimate, envelope_refreshes: refreshes })
}

fn frac_inclusive(i: usize, count: usize) -> f64 {
    if count <= 1 {
        0.5
    } else {
        i as f64 / (count - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetShape;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn unit_domain() -> Domain {
        Domain { lo: [0.0, 0.0], hi: [1.0, 0.0], t_end: 1.0 }
    }

    #[test]
    fn grid_lattice_uses_interior_offsets() {
        let set = uniform_points(&unit_domain(), 1, 9, 3, 4, Layout::Grid, 0).unwrap();
        assert_eq!(set.n_interior(), 9);
        assert!(set.grid_warning.is_none());
        let expect = [0.25, 0.5, 0.75];
        for i in 0..9 {
            let (x, t) = set.interior_point(i);
            assert_relative_eq!(x[0], expect[i / 3], max_relative = 1e-15);
            assert_relative_eq!(t, expect[i % 3], max_relative = 1e-15);
        }
        for i in 0..3 {
            let (x, t) = set.initial_point(i);
            assert_relative_eq!(x[0], expect[i], max_relative = 1e-15);
            assert_eq!(t, 0.0);
        }
        // Boundary: two faces, two points each, interior time offsets.
        assert_eq!(set.n_boundary(), 4);
        let (x, t, f) = set.boundary_point(0);
        assert_eq!((x[0], f.axis, f.high), (0.0, 0, false));
        assert_relative_eq!(t, 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn grid_mismatch_warns_and_random_is_deterministic() {
        let set = uniform_points(&unit_domain(), 1, 10, 3, 4, Layout::Grid, 0).unwrap();
        assert!(set.grid_warning.is_some());
        assert_ne!(set.n_interior(), 10);

        let a = uniform_points(&unit_domain(), 1, 50, 10, 8, Layout::Random, 42).unwrap();
        let b = uniform_points(&unit_domain(), 1, 50, 10, 8, Layout::Random, 42).unwrap();
        assert_eq!(a.interior, b.interior);
        assert_eq!(a.boundary, b.boundary);
        let c = uniform_points(&unit_domain(), 1, 50, 10, 8, Layout::Random, 43).unwrap();
        assert_ne!(a.interior, c.interior);
    }

    #[test]
    fn two_dimensional_faces_split_evenly() {
        let dom = Domain { lo: [-1.0, 2.0], hi: [1.0, 3.0], t_end: 2.0 };
        let set = uniform_points(&dom, 2, 27, 9, 8, Layout::Grid, 0).unwrap();
        assert_eq!(set.n_boundary(), 8);
        let mut per_face = [0usize; 4];
        for i in 0..8 {
            let (_, _, f) = set.boundary_point(i);
            per_face[f.axis * 2 + usize::from(f.high)] += 1;
        }
        assert_eq!(per_face, [2, 2, 2, 2]);
        set.check(&dom).unwrap();
    }

    #[test]
    fn normalizer_closed_forms() {
        assert_eq!(normalizer_axis(NormalizerKind::ProductForm, 0.0), 0.0);
        assert_eq!(normalizer_axis(NormalizerKind::ProductForm, 1.0), 0.0);
        assert_relative_eq!(
            normalizer_axis(NormalizerKind::ProductForm, 0.5),
            0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            normalizer_axis(NormalizerKind::REquivalence, 0.5),
            1.0 - 0.5f64.sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            normalizer_axis(NormalizerKind::NormalizedProduct, 0.5),
            0.25 / 0.5f64.sqrt(),
            max_relative = 1e-15
        );
        // Multi-axis product.
        assert_relative_eq!(
            normalizer(NormalizerKind::ProductForm, &[0.5, 0.5]),
            0.0625,
            max_relative = 1e-15
        );
        // Exact annihilation on faces for every kind.
        for kind in [
            NormalizerKind::ProductForm,
            NormalizerKind::REquivalence,
            NormalizerKind::NormalizedProduct,
        ] {
            assert_eq!(normalizer_axis(kind, 0.0), 0.0);
            assert_eq!(normalizer_axis(kind, 1.0), 0.0);
            assert_eq!(normalizer(kind, &[0.0, 0.37]), 0.0);
        }
    }

    fn random_mesh(dim: usize, seed: u64, domain: Domain) -> MeshMap {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let shape = NetShape::rectangle(dim + 1, 2, 6, dim).unwrap();
        let net = DenseNetwork::glorot(shape, &mut rng);
        MeshMap::new(net, NormalizerKind::ProductForm, domain, dim).unwrap()
    }

    #[test]
    fn zero_displacement_net_is_identity_map() {
        let dom = Domain { lo: [-3.0, 0.0], hi: [5.0, 0.0], t_end: 2.0 };
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let mesh =
            MeshMap::identity(NormalizerKind::ProductForm, dom.clone(), 1, 2, 8, &mut rng).unwrap();
        let mut out = [0.0f64; 1];
        for xi in [-3.0, -1.7, 0.0, 2.4, 5.0] {
            mesh.map_point(&[xi], 0.8, &mut out).unwrap();
            assert_eq!(out[0], xi);
        }
    }

    #[test]
    fn map_points_preserves_structure() {
        let dom = Domain { lo: [-1.0, -1.0], hi: [1.0, 1.0], t_end: 1.0 };
        let set = uniform_points(&dom, 2, 16, 4, 8, Layout::Random, 3).unwrap();
        let mesh = random_mesh(2, 9, dom.clone());
        let mapped = map_points(&mesh, &set).unwrap();
        assert_eq!(mapped.frame, Frame::Physical);
        assert_eq!(mapped.n_interior(), set.n_interior());
        assert_eq!(mapped.n_initial(), set.n_initial());
        // Boundary block is bit-identical; face tags preserved.
        assert_eq!(mapped.boundary, set.boundary);
        assert_eq!(mapped.faces, set.faces);
        // Time coordinates never move.
        for i in 0..set.n_interior() {
            assert_eq!(mapped.interior_point(i).1, set.interior_point(i).1);
        }
        for i in 0..set.n_initial() {
            assert_eq!(mapped.initial_point(i).1, 0.0);
        }
        mapped.check(&dom).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Boundary points are exact fixed points of any mesh map.
        #[test]
        fn boundary_faces_are_fixed_points(
            seed in any::<u64>(),
            face in 0usize..4,
            frac in 0.0f64..=1.0,
            t in 0.0f64..=1.0,
        ) {
            let dom = Domain { lo: [-2.0, 0.5], hi: [3.0, 1.5], t_end: 1.0 };
            for kind in [
                NormalizerKind::ProductForm,
                NormalizerKind::REquivalence,
                NormalizerKind::NormalizedProduct,
            ] {
                let mut mesh = random_mesh(2, seed, dom.clone());
                mesh.kind = kind;
                let axis = face / 2;
                let other = 1 - axis;
                let mut xi = [0.0f64; 2];
                xi[axis] = if face % 2 == 1 { dom.hi[axis] } else { dom.lo[axis] };
                xi[other] = dom.lo[other] + frac * dom.extent(other);
                let mut out = [0.0f64; 2];
                mesh.map_point(&xi, t, &mut out).unwrap();
                prop_assert_eq!(out, xi);
            }
        }

        /// The normalizer is strictly positive away from the faces.
        #[test]
        fn normalizer_positive_inside(s in 1e-6f64..=0.999999) {
            for kind in [
                NormalizerKind::ProductForm,
                NormalizerKind::REquivalence,
                NormalizerKind::NormalizedProduct,
            ] {
                prop_assert!(normalizer_axis(kind, s) > 0.0);
            }
        }
    }

    #[test]
    fn flat_solution_resamples_uniformly() {
        // Zero-output network: w = 1 everywhere, so the resampler must
        // reproduce the uniform law; checked with marginal KS statistics.
        let dom = unit_domain();
        let shape = NetShape::rectangle(2, 2, 8, 2).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let mut net = DenseNetwork::glorot(shape, &mut rng);
        net.zero_output_layer();
        let n = 10_000;
        let s = wam_resample(&net, &dom, 1, n, 1.0, 11).unwrap();
        assert_eq!(s.points.len(), n * 2);
        assert_eq!(s.envelope_refreshes, 0);
        assert_relative_eq!(s.z_estimate, 1.0, max_relative = 1e-12);
        for axis in 0..2 {
            let mut v: Vec<f64> = (0..n).map(|i| s.points[i * 2 + axis]).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut ks: f64 = 0.0;
            for (i, &x) in v.iter().enumerate() {
                let f = x; // uniform CDF on [0, 1]
                ks = ks.max((f - i as f64 / n as f64).abs());
                ks = ks.max(((i + 1) as f64 / n as f64 - f).abs());
            }
            assert!(ks < 0.02, "axis {axis}: KS = {ks}");
        }
    }

    #[test]
    fn larger_exponent_concentrates_on_steep_regions() {
        let dom = unit_domain();
        let shape = NetShape::rectangle(2, 2, 12, 1).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(17);
        let net = DenseNetwork::glorot(shape, &mut rng);
        let mean_w = |k: f64| {
            let s = wam_resample(&net, &dom, 1, 2000, k, 23).unwrap();
            let mut scratch = ProbeScratch::default();
            let mut out = Vec::new();
            let mut acc = 0.0;
            for i in 0..2000 {
                let pt = &s.points[i * 2..i * 2 + 2];
                let mut g2 = 0.0;
                for a in 0..2 {
                    let mut d = [0.0; 2];
                    d[a] = 1.0;
                    net.probe_into(pt, &d, 1, &mut scratch, &mut out).unwrap();
                    g2 += out[0][1] * out[0][1];
                }
                acc += (1.0 + g2).sqrt();
            }
            acc / 2000.0
        };
        let m1 = mean_w(1.0);
        let m3 = mean_w(3.0);
        assert!(m3 > m1, "k=3 mean {m3} should exceed k=1 mean {m1}");
        // Same seed, same draw.
        let a = wam_resample(&net, &dom, 1, 100, 2.0, 7).unwrap();
        let b = wam_resample(&net, &dom, 1, 100, 2.0, 7).unwrap();
        assert_eq!(a.points, b.points);
    }
}
