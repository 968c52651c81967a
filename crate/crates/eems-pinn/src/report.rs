//! Run artifacts: CSV emission for loss histories, energy traces, error
//! grids, point sets, and coordinate-map snapshots, plus a one-stop
//! assembler that lays a whole run down on disk.
//!
//! Schemas: energy `t,H_d,dH_rel`; error grid `coords…,t,u_exact,u_pred,
//! abs_err`; loss `iter,total,term…`; points `tag,coords…,t`; mesh
//! `t,xi…,x…`.  Floats are written with `{:.17e}` so files round-trip
//! bit-exactly and identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::trapezoid_rule;
use crate::error::{Error, Result};
use crate::fields::{FieldSource, NetSource};
use crate::pipeline::RunReport;
use crate::problems::{ProbeDir, ProblemSpec};
use crate::sampling::{MeshMap, PointSet};
use crate::training::loss_term_names;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

/// Default space-time error grid: nodes per spatial axis and time samples.
pub fn default_error_grid(dim: usize) -> (usize, usize) {
    if dim == 1 {
        (256, 101)
    } else {
        (101, 11)
    }
}

/// `iter,total,term…` with one row per visited iterate, all phases
/// concatenated in execution order.  Empty histories give a header-only file.
pub fn write_loss_csv(path: &Path, run: &RunReport, components: usize) -> Result<()> {
    let names = loss_term_names(components);
    let mut out = String::from("iter,total");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let mut iter = 0usize;
    let mut phases: Vec<(&Vec<f64>, &Vec<Vec<f64>>)> =
        vec![(&run.pretrain.history, &run.pretrain.terms)];
    for round in &run.rounds {
        if let Some(rep) = &round.retrain {
            phases.push((&rep.history, &rep.terms));
        }
    }
    for (history, terms) in phases {
        for (i, &loss) in history.iter().enumerate() {
            let _ = write!(out, "{iter},{}", fmt_f(loss));
            let row = terms.get(i).map(Vec::as_slice).unwrap_or(&[]);
            for k in 0..names.len() {
                out.push(',');
                if let Some(v) = row.get(k) {
                    out.push_str(&fmt_f(*v));
                }
            }
            out.push('\n');
            iter += 1;
        }
    }
    write_file(path, &out)
}

/// `t,H_d,dH_rel` with the relative drift measured against the first entry.
pub fn write_energy_csv(path: &Path, trace: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("t,H_d,dH_rel\n");
    let h0 = trace.first().map(|&(_, h)| h).unwrap_or(0.0);
    let denom = h0.abs().max(1e-12);
    for &(t, h) in trace {
        let _ = writeln!(out, "{},{},{}", fmt_f(t), fmt_f(h), fmt_f((h - h0).abs() / denom));
    }
    write_file(path, &out)
}

/// Summary statistics of an emitted error grid.
#[derive(Clone, Copy, Debug)]
pub struct ErrorGridSummary {
    /// Relative L2 error accumulated over the written grid.
    pub rel_l2: f64,
    pub max_abs: f64,
    pub rows: usize,
}

/// `x…,t,u_exact,u_pred,abs_err` on an inclusive uniform space-time grid,
/// mirroring the grid convention of the scalar relative-L2 metric.
pub fn write_error_grid_csv(
    path: &Path,
    spec: &ProblemSpec,
    approx: &impl FieldSource,
    reference: &impl FieldSource,
    per_axis: usize,
    n_times: usize,
) -> Result<ErrorGridSummary> {
    if n_times < 2 {
        return Err(Error::Config(format!("error grid needs at least 2 times, got {n_times}")));
    }
    let dim = spec.dim;
    let (x0, _) = trapezoid_rule(spec.domain.lo[0], spec.domain.hi[0], per_axis)?;
    let x1 = if dim == 2 {
        trapezoid_rule(spec.domain.lo[1], spec.domain.hi[1], per_axis)?.0
    } else {
        vec![0.0]
    };
    let mut out = String::new();
    if dim == 1 {
        out.push_str("x,t,u_exact,u_pred,abs_err\n");
    } else {
        out.push_str("x1,x2,t,u_exact,u_pred,abs_err\n");
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max_abs = 0.0f64;
    let mut rows = 0usize;
    let mut x = [0.0f64; 2];
    for it in 0..n_times {
        let t = spec.domain.t_end * it as f64 / (n_times - 1) as f64;
        for a in &x0 {
            x[0] = *a;
            for b in &x1 {
                x[1] = *b;
                let up = approx.probe(&x[..dim], t, ProbeDir::T, 0)?[0].c[0];
                let ue = reference.probe(&x[..dim], t, ProbeDir::T, 0)?[0].c[0];
                let err = (up - ue).abs();
                num += (up - ue) * (up - ue);
                den += ue * ue;
                max_abs = max_abs.max(err);
                for k in 0..dim {
                    let _ = write!(out, "{},", fmt_f(x[k]));
                }
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f(t),
                    fmt_f(ue),
                    fmt_f(up),
                    fmt_f(err)
                );
                rows += 1;
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::Structural("reference field is identically zero on the grid".into()));
    }
    write_file(path, &out)?;
    Ok(ErrorGridSummary { rel_l2: (num / den).sqrt(), max_abs, rows })
}

/// `tag,x…,t` for every collocation point in the set.
pub fn write_points_csv(path: &Path, points: &PointSet) -> Result<()> {
    let dim = points.dim;
    let mut out = String::from("tag,");
    if dim == 1 {
        out.push_str("x,t\n");
    } else {
        out.push_str("x1,x2,t\n");
    }
    let row = |tag: &str, coords: &[f64], t: f64, out: &mut String| {
        out.push_str(tag);
        for c in coords {
            out.push(',');
            out.push_str(&fmt_f(*c));
        }
        out.push(',');
        out.push_str(&fmt_f(t));
        out.push('\n');
    };
    for i in 0..points.n_interior() {
        let (x, t) = points.interior_point(i);
        row("interior", x, t, &mut out);
    }
    for i in 0..points.n_initial() {
        let (x, t) = points.initial_point(i);
        row("initial", x, t, &mut out);
    }
    for i in 0..points.n_boundary() {
        let (x, t, _) = points.boundary_point(i);
        row("boundary", x, t, &mut out);
    }
    write_file(path, &out)
}

/// Coordinate-map snapshots: `t,xi…,x…` over an inclusive lattice of
/// reference coordinates at each requested time.
pub fn write_mesh_csv(
    path: &Path,
    mesh: &MeshMap,
    times: &[f64],
    per_axis: usize,
) -> Result<()> {
    let dim = mesh.dim;
    let (g0, _) = trapezoid_rule(mesh.domain.lo[0], mesh.domain.hi[0], per_axis)?;
    let g1 = if dim == 2 {
        trapezoid_rule(mesh.domain.lo[1], mesh.domain.hi[1], per_axis)?.0
    } else {
        vec![0.0]
    };
    let mut out = String::from(if dim == 1 { "t,xi,x\n" } else { "t,xi1,xi2,x1,x2\n" });
    let mut xi = [0.0f64; 2];
    let mut x = [0.0f64; 2];
    for &t in times {
        for a in &g0 {
            xi[0] = *a;
            for b in &g1 {
                xi[1] = *b;
                mesh.map_point(&xi[..dim], t, &mut x[..dim])?;
                out.push_str(&fmt_f(t));
                for k in 0..dim {
                    out.push(',');
                    out.push_str(&fmt_f(xi[k]));
                }
                for k in 0..dim {
                    out.push(',');
                    out.push_str(&fmt_f(x[k]));
                }
                out.push('\n');
            }
        }
    }
    write_file(path, &out)
}

/// Everything `assemble_report` kept score of while writing.
#[derive(Clone, Debug)]
pub struct ReportSummary {
    pub final_loss: f64,
    pub energy_drift: f64,
    /// Present when a reference solution was available for the error grid.
    pub error: Option<ErrorGridSummary>,
    pub files: Vec<PathBuf>,
}

/// Write every artifact of a finished run into `dir` (created if missing):
/// loss history, energy trace, initial and final point sets, the network
/// checkpoint, the mesh snapshots when a map was trained, the error grid
/// when a reference is supplied, and a one-row run summary.
pub fn assemble_report(
    dir: &Path,
    spec: &ProblemSpec,
    run: &RunReport,
    reference: Option<&dyn FieldSource>,
    per_axis: usize,
    n_times: usize,
) -> Result<ReportSummary> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let push = |files: &mut Vec<PathBuf>, p: PathBuf| -> PathBuf {
        files.push(p.clone());
        p
    };

    write_loss_csv(&push(&mut files, dir.join("loss.csv")), run, spec.components)?;
    write_energy_csv(&push(&mut files, dir.join("energy.csv")), &run.energy_trace)?;
    write_points_csv(&push(&mut files, dir.join("points_initial.csv")), &run.base_points)?;
    write_points_csv(&push(&mut files, dir.join("points_final.csv")), &run.points)?;
    run.net.save(&push(&mut files, dir.join("net.ckpt")))?;

    if let Some(mesh) = &run.mesh {
        let t_end = spec.domain.t_end;
        let times = [0.0, 0.5 * t_end, t_end];
        let per = if spec.dim == 1 { 101 } else { 21 };
        write_mesh_csv(&push(&mut files, dir.join("mesh.csv")), mesh, &times, per)?;
        mesh.net.save(&push(&mut files, dir.join("mesh_net.ckpt")))?;
    }

    let error = match reference {
        Some(r) => Some(write_error_grid_csv(
            &push(&mut files, dir.join("error.csv")),
            spec,
            &NetSource { net: &run.net },
            &r,
            per_axis,
            n_times,
        )?),
        None => None,
    };

    let mut summary = String::from("problem,sampler,seed,final_loss,energy_drift,rel_l2\n");
    let _ = write!(
        summary,
        "{},{},{},{},{}",
        run.problem,
        run.sampler,
        run.seed,
        fmt_f(run.final_loss()),
        fmt_f(run.drift_final)
    );
    match &error {
        Some(e) => {
            let _ = writeln!(summary, ",{}", fmt_f(e.rel_l2));
        }
        None => summary.push_str(",\n"),
    }
    write_file(&push(&mut files, dir.join("summary.csv")), &summary)?;

    Ok(ReportSummary {
        final_loss: run.final_loss(),
        energy_drift: run.drift_final,
        error,
        files,
    })
}
