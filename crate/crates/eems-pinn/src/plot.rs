//! Static PNG plots: solution and error heatmaps, collocation-point
//! scatters, and energy / loss curves.
//!
//! Rendering is deliberately spartan — framed axes without text — because
//! the plots exist to eyeball a run, not to publish.  All pixel work is
//! deterministic, so identical runs produce identical image bytes.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::fields::{FieldSource, NetSource};
use crate::pipeline::RunReport;
use crate::problems::{ProbeDir, ProblemSpec};
use crate::sampling::PointSet;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 480;
const MARGIN: u32 = 40;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const FRAME: Rgb<u8> = Rgb([40, 40, 40]);
const SERIES: [Rgb<u8>; 3] = [Rgb([31, 119, 180]), Rgb([214, 39, 40]), Rgb([44, 160, 44])];

/// Uniformly sampled sequential colormap anchors (dark blue to yellow).
const MAP: [[f64; 3]; 11] = [
    [0.267, 0.005, 0.329],
    [0.283, 0.141, 0.458],
    [0.254, 0.265, 0.530],
    [0.207, 0.372, 0.553],
    [0.164, 0.471, 0.558],
    [0.128, 0.567, 0.551],
    [0.135, 0.659, 0.518],
    [0.267, 0.749, 0.441],
    [0.478, 0.821, 0.318],
    [0.741, 0.873, 0.150],
    [0.993, 0.906, 0.144],
];

fn colormap(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0) * (MAP.len() - 1) as f64;
    let i = (v.floor() as usize).min(MAP.len() - 2);
    let f = v - i as f64;
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = ((MAP[i][k] * (1.0 - f) + MAP[i + 1][k] * f) * 255.0).round() as u8;
    }
    Rgb(c)
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new() -> Self {
        let mut img = RgbImage::new(WIDTH, HEIGHT);
        for p in img.pixels_mut() {
            *p = BG;
        }
        Canvas { img }
    }

    fn plot_rect(&self) -> (u32, u32, u32, u32) {
        (MARGIN, MARGIN, WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN)
    }

    fn frame(&mut self) {
        let (x0, y0, w, h) = self.plot_rect();
        for x in x0..=x0 + w {
            self.img.put_pixel(x, y0, FRAME);
            self.img.put_pixel(x, y0 + h, FRAME);
        }
        for y in y0..=y0 + h {
            self.img.put_pixel(x0, y, FRAME);
            self.img.put_pixel(x0 + w, y, FRAME);
        }
    }

    /// Data coordinates in `[0, 1]^2` to pixel coordinates (y grows up).
    fn to_pixel(&self, u: f64, v: f64) -> (i64, i64) {
        let (x0, y0, w, h) = self.plot_rect();
        let px = x0 as f64 + u.clamp(0.0, 1.0) * w as f64;
        let py = (y0 + h) as f64 - v.clamp(0.0, 1.0) * h as f64;
        (px.round() as i64, py.round() as i64)
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn dot(&mut self, u: f64, v: f64, c: Rgb<u8>) {
        let (px, py) = self.to_pixel(u, v);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                self.put(px + dx, py + dy, c);
            }
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let (x0, y0) = self.to_pixel(a.0, a.1);
        let (x1, y1) = self.to_pixel(b.0, b.1);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            let x = x0 as f64 + f * (x1 - x0) as f64;
            let y = y0 as f64 + f * (y1 - y0) as f64;
            self.put(x.round() as i64, y.round() as i64, c);
        }
    }

    fn save(self, path: &Path) -> Result<()> {
        self.img
            .save(path)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

/// Render a scalar field sampled on an `nx x ny` grid (row-major over y then
/// x, y increasing upward) with the embedded colormap.
pub fn plot_heatmap(path: &Path, values: &[f64], nx: usize, ny: usize) -> Result<()> {
    if nx < 2 || ny < 2 || values.len() != nx * ny {
        return Err(Error::Config(format!(
            "heatmap wants nx*ny values with nx, ny >= 2; got {}x{} with {}",
            nx,
            ny,
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("heatmap values must be finite".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut canvas = Canvas::new();
    let (x0, y0, w, h) = canvas.plot_rect();
    for py in 0..h {
        // Flip: pixel row 0 is the top of the plot, which is the last y row.
        let v = 1.0 - py as f64 / (h - 1) as f64;
        let gy = (v * (ny - 1) as f64).round() as usize;
        for px in 0..w {
            let u = px as f64 / (w - 1) as f64;
            let gx = (u * (nx - 1) as f64).round() as usize;
            let val = (values[gy * nx + gx] - lo) / span;
            canvas.img.put_pixel(x0 + px, y0 + py, colormap(val));
        }
    }
    canvas.frame();
    canvas.save(path)
}

/// One or more named line series on shared axes; a log-scale option maps
/// each value through `log10(max(y, 1e-16))`.
pub fn plot_curves(path: &Path, series: &[(&str, Vec<(f64, f64)>)], log_y: bool) -> Result<()> {
    if series.iter().all(|(_, s)| s.is_empty()) {
        return Err(Error::Config("nothing to plot: every series is empty".into()));
    }
    let transform = |y: f64| if log_y { y.abs().max(1e-16).log10() } else { y };
    let mut xlo = f64::INFINITY;
    let mut xhi = f64::NEG_INFINITY;
    let mut ylo = f64::INFINITY;
    let mut yhi = f64::NEG_INFINITY;
    for (_, s) in series {
        for &(x, y) in s {
            let y = transform(y);
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Config("curve data must be finite".into()));
            }
            xlo = xlo.min(x);
            xhi = xhi.max(x);
            ylo = ylo.min(y);
            yhi = yhi.max(y);
        }
    }
    let xspan = if xhi > xlo { xhi - xlo } else { 1.0 };
    let yspan = if yhi > ylo { yhi - ylo } else { 1.0 };
    let mut canvas = Canvas::new();
    canvas.frame();
    for (k, (_, s)) in series.iter().enumerate() {
        let color = SERIES[k % SERIES.len()];
        let norm = |&(x, y): &(f64, f64)| {
            ((x - xlo) / xspan, (transform(y) - ylo) / yspan)
        };
        if s.len() == 1 {
            let (u, v) = norm(&s[0]);
            canvas.dot(u, v, color);
        }
        for pair in s.windows(2) {
            canvas.segment(norm(&pair[0]), norm(&pair[1]), color);
        }
    }
    canvas.save(path)
}

/// Scatter of 2D data points over explicit axis ranges.
pub fn plot_scatter(
    path: &Path,
    points: &[(f64, f64)],
    x_range: (f64, f64),
    y_range: (f64, f64),
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Config("nothing to plot: no points".into()));
    }
    let xspan = (x_range.1 - x_range.0).max(1e-300);
    let yspan = (y_range.1 - y_range.0).max(1e-300);
    let mut canvas = Canvas::new();
    canvas.frame();
    for &(x, y) in points {
        canvas.dot((x - x_range.0) / xspan, (y - y_range.0) / yspan, SERIES[0]);
    }
    canvas.save(path)
}

fn field_grid(
    spec: &ProblemSpec,
    src: &impl FieldSource,
    nx: usize,
    ny: usize,
    at_final_time: bool,
) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(nx * ny);
    let lo = spec.domain.lo;
    let hi = spec.domain.hi;
    let mut x = [0.0f64; 2];
    for iy in 0..ny {
        let fy = iy as f64 / (ny - 1) as f64;
        for ix in 0..nx {
            let fx = ix as f64 / (nx - 1) as f64;
            let t;
            if spec.dim == 1 {
                // Axes: x across, t up.
                x[0] = lo[0] + fx * (hi[0] - lo[0]);
                t = fy * spec.domain.t_end;
            } else {
                x[0] = lo[0] + fx * (hi[0] - lo[0]);
                x[1] = lo[1] + fy * (hi[1] - lo[1]);
                t = if at_final_time { spec.domain.t_end } else { 0.0 };
            }
            values.push(src.probe(&x[..spec.dim], t, ProbeDir::T, 0)?[0].c[0]);
        }
    }
    Ok(values)
}

fn scatter_coords(points: &PointSet) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.n_interior());
    for i in 0..points.n_interior() {
        let (x, t) = points.interior_point(i);
        if points.dim == 1 {
            out.push((x[0], t));
        } else {
            out.push((x[0], x[1]));
        }
    }
    out
}

/// Render the standard plot set for a finished run: solution heatmap, error
/// heatmap when a reference is available, interior-point scatter, energy
/// trace, and loss curve.  Returns the files written.
pub fn render_run_plots(
    dir: &Path,
    spec: &ProblemSpec,
    run: &RunReport,
    reference: Option<&dyn FieldSource>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let (nx, ny) = if spec.dim == 1 { (201, 101) } else { (101, 101) };
    let approx = NetSource { net: &run.net };
    let tag = if spec.dim == 1 {
        String::new()
    } else {
        format!("_t{}", spec.domain.t_end)
    };

    let solution = field_grid(spec, &approx, nx, ny, true)?;
    let p = dir.join(format!("heatmap_solution{tag}.png"));
    plot_heatmap(&p, &solution, nx, ny)?;
    files.push(p);

    if let Some(r) = reference {
        let exact = field_grid(spec, &r, nx, ny, true)?;
        let err: Vec<f64> =
            solution.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
        let p = dir.join(format!("heatmap_error{tag}.png"));
        plot_heatmap(&p, &err, nx, ny)?;
        files.push(p);
    }

    let pts = scatter_coords(&run.points);
    let (xr, yr) = if spec.dim == 1 {
        ((spec.domain.lo[0], spec.domain.hi[0]), (0.0, spec.domain.t_end))
    } else {
        (
            (spec.domain.lo[0], spec.domain.hi[0]),
            (spec.domain.lo[1], spec.domain.hi[1]),
        )
    };
    let p = dir.join("scatter_points.png");
    plot_scatter(&p, &pts, xr, yr)?;
    files.push(p);

    let p = dir.join("curve_energy.png");
    plot_curves(&p, &[("H_d", run.energy_trace.clone())], false)?;
    files.push(p);

    let loss: Vec<(f64, f64)> = run
        .loss_history()
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, l))| (i as f64, l))
        .collect();
    if !loss.is_empty() {
        let p = dir.join("curve_loss.png");
        plot_curves(&p, &[("loss", loss)], true)?;
        files.push(p);
    }
    Ok(files)
}
