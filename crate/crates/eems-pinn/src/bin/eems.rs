//! Command-line experiment runner.
//!
//! Subcommands: `run` (one pipeline run with artifacts), `compare`
//! (budget-matched sampler comparison across seeds), `check` (on-demand
//! validation suites), and `mesh-only` (train just the coordinate map).
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime abort.  The
//! `EEMS_THREADS` environment variable caps evaluation parallelism.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eems_pinn::config::ExperimentConfig;
use eems_pinn::diagnostics::{energy_trace, max_relative_drift, relative_l2_error};
use eems_pinn::eep::{identity_map, train_mesh, EmmConfig, LinearMonitor};
use eems_pinn::fields::{ExactSource, FieldSource, KdvSource, NetSource};
use eems_pinn::network::{DenseNetwork, NetShape};
use eems_pinn::pipeline::{run_mesh_only, run_pipeline, RunReport, SamplerKind};
use eems_pinn::plot::render_run_plots;
use eems_pinn::problems::{make_problem, ProblemSpec, PROBLEM_NAMES};
use eems_pinn::problems::kdv_ref::KdvReference;
use eems_pinn::report::{assemble_report, write_mesh_csv, write_points_csv};
use eems_pinn::problems::Domain;
use eems_pinn::sampling::{uniform_points, Layout, NormalizerKind};
use eems_pinn::training::{PhaseConfig, PinnLoss};
use eems_pinn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "eems",
    about = "Energy-equidistributed moving-mesh PINN solver for conservative PDEs",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured sampler pipeline on one benchmark and write a
    /// report directory.
    Run(RunArgs),
    /// Run several samplers over several seeds with identical budgets and
    /// write a comparison table.
    Compare(CompareArgs),
    /// On-demand validation suites.
    Check {
        #[arg(value_enum)]
        target: CheckTarget,
    },
    /// Train only the coordinate map, optionally against a stored solution
    /// checkpoint.
    MeshOnly(MeshOnlyArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark name (overrides the file).
    #[arg(long)]
    problem: Option<String>,
    /// Collocation sampler: uniform, wam, or eems (overrides the file).
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every training budget with this iteration count.
    #[arg(long)]
    iters: Option<usize>,
    /// Maximum adaptation rounds (overrides the file).
    #[arg(long)]
    rounds: Option<usize>,
    /// Skip writing plot images.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated sampler list.
    #[arg(long, default_value = "uniform,wam,eems")]
    samplers: String,
    /// Comma-separated seed list; defaults to the configured seed.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct MeshOnlyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Solution-network checkpoint to build the monitor from; when omitted
    /// a network is pre-trained first.
    #[arg(long)]
    net: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckTarget {
    /// Gradients of the collocation loss against finite differences.
    Grad,
    /// Discrete energy of a closed-form solution against its exact value.
    Energy,
    /// Trained 1D coordinate map against the analytic equidistribution.
    Mesh,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Ok(v) = std::env::var("EEMS_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: EEMS_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Compare(args) => cmd_compare(&args),
        Cmd::Check { target } => cmd_check(target),
        Cmd::MeshOnly(args) => cmd_mesh_only(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Configuration problems exit with 2; runtime aborts with 3.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::UnknownProblem(_)
        | Error::InvalidParameter { .. }
        | Error::Checkpoint(_) => 2,
        _ => 3,
    }
}

/// Resolve the effective configuration: file (or per-problem defaults),
/// then command-line overrides on top.
fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.problem) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(problem)) => ExperimentConfig::for_problem(problem)?,
        (None, None) => {
            return Err(Error::Config(
                "nothing to run: pass --config FILE or --problem NAME".into(),
            ))
        }
    };
    if let Some(p) = &common.problem {
        if *p != cfg.problem {
            // Re-derive problem defaults only when no file pinned them.
            cfg.problem = p.clone();
        }
    }
    if let Some(s) = &common.sampler {
        cfg.sampler = s.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.display().to_string();
    }
    if let Some(n) = common.iters {
        cfg.optimizer.pretrain_iters = n;
        cfg.optimizer.mesh_iters = n;
        cfg.optimizer.retrain_iters = n;
    }
    if let Some(r) = common.rounds {
        cfg.rounds = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The reference solution used for error grids: closed form when available,
/// otherwise the spectral integration for the soliton equation without one.
enum Reference {
    Exact,
    Kdv(KdvReference),
    None,
}

impl Reference {
    fn build(spec: &ProblemSpec) -> Result<Self> {
        if spec.has_exact() {
            Ok(Reference::Exact)
        } else if spec.name == "kdv1d" {
            log::info!("integrating the spectral reference solution");
            Ok(Reference::Kdv(KdvReference::with_defaults(spec.domain.t_end)?))
        } else {
            Ok(Reference::None)
        }
    }

    fn with_source<R>(
        &self,
        spec: &ProblemSpec,
        f: impl FnOnce(Option<&dyn FieldSource>) -> Result<R>,
    ) -> Result<R> {
        match self {
            Reference::Exact => {
                let src = ExactSource { spec };
                f(Some(&src))
            }
            Reference::Kdv(r) => {
                let src = KdvSource { reference: r };
                f(Some(&src))
            }
            Reference::None => f(None),
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let spec = make_problem(&cfg.problem)?;
    let pipe = cfg.to_pipeline()?;
    println!(
        "running {} with the {} sampler, seed {}",
        cfg.problem, cfg.sampler, cfg.seed
    );
    let run = run_pipeline(&spec, &pipe)?;
    report_run(&cfg, &spec, &run, args.common.no_plots)
}

fn report_run(
    cfg: &ExperimentConfig,
    spec: &ProblemSpec,
    run: &RunReport,
    no_plots: bool,
) -> Result<()> {
    let dir = PathBuf::from(&cfg.out);
    let reference = Reference::build(spec)?;
    let (per_axis, n_times) = cfg.error_grid(spec.dim);
    let summary = reference.with_source(spec, |r| {
        assemble_report(&dir, spec, run, r, per_axis, n_times)
    })?;
    if !no_plots {
        let plots = reference
            .with_source(spec, |r| render_run_plots(&dir, spec, run, r))?;
        log::info!("wrote {} plot images", plots.len());
    }
    for round in &run.rounds {
        match (&round.error, round.skipped) {
            (Some(e), _) => println!("  round aborted: {e}"),
            (None, true) => println!(
                "  adaptation skipped: energy drift {:.3e} within tolerance",
                round.drift_before
            ),
            (None, false) => println!(
                "  adaptation round: drift {:.3e}, points {}",
                round.drift_before,
                if round.relocated { "relocated" } else { "kept" }
            ),
        }
    }
    println!("  final loss       {:.6e}", summary.final_loss);
    println!("  energy drift     {:.6e}", summary.energy_drift);
    if let Some(e) = &summary.error {
        println!("  relative L2      {:.6e}", e.rel_l2);
    }
    println!("  artifacts in     {}", dir.display());
    Ok(())
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let spec = make_problem(&cfg.problem)?;
    let samplers: Vec<SamplerKind> = args
        .samplers
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = match &args.seeds {
        None => vec![cfg.seed],
        Some(list) => list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed `{s}`")))
            })
            .collect::<Result<_>>()?,
    };
    if samplers.is_empty() || seeds.is_empty() {
        return Err(Error::Config("compare needs at least one sampler and one seed".into()));
    }

    let reference = Reference::build(&spec)?;
    let (per_axis, n_times) = cfg.error_grid(spec.dim);
    let mut rows = String::from("sampler,seed,rel_l2,energy_drift\n");
    println!("{:<10} {:>6} {:>12} {:>12}", "sampler", "seed", "rel_l2", "drift");
    for &sampler in &samplers {
        let mut errs = Vec::new();
        let mut drifts = Vec::new();
        for &seed in &seeds {
            let mut c = cfg.clone();
            c.sampler = sampler.to_string();
            c.seed = seed;
            let pipe = c.to_pipeline()?;
            let run = run_pipeline(&spec, &pipe)?;
            let rel = reference.with_source(&spec, |r| match r {
                Some(r) => relative_l2_error(
                    &NetSource { net: &run.net },
                    &r,
                    &spec.domain,
                    spec.dim,
                    per_axis,
                    n_times,
                )
                .map(Some),
                None => Ok(None),
            })?;
            let rel = rel.unwrap_or(f64::NAN);
            errs.push(rel);
            drifts.push(run.drift_final);
            rows.push_str(&format!(
                "{sampler},{seed},{rel:.17e},{:.17e}\n",
                run.drift_final
            ));
            println!("{sampler:<10} {seed:>6} {rel:>12.4e} {:>12.4e}", run.drift_final);
        }
        let me = median(&mut errs);
        let md = median(&mut drifts);
        rows.push_str(&format!("{sampler},median,{me:.17e},{md:.17e}\n"));
        println!("{sampler:<10} {:>6} {me:>12.4e} {md:>12.4e}", "median");
    }
    let dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join("compare.csv");
    std::fs::write(&path, rows)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_check(target: CheckTarget) -> Result<()> {
    match target {
        CheckTarget::Grad => check_grad(),
        CheckTarget::Energy => check_energy(),
        CheckTarget::Mesh => check_mesh(),
    }
}

/// Collocation-loss gradients versus central finite differences on every
/// benchmark, with a small network and lattice.
fn check_grad() -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut failures = Vec::new();
    for name in PROBLEM_NAMES {
        let spec = make_problem(name)?;
        let shape = NetShape::rectangle(spec.dim + 1, 1, 6, spec.components)?;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(13);
        let net = DenseNetwork::glorot(shape.clone(), &mut rng);
        let points = uniform_points(&spec.domain, spec.dim, 24, 8, 8, Layout::Random, 5)?;
        let mut obj = PinnLoss::new(&spec, &shape, &points, Default::default())?;
        let mut grad = vec![0.0; net.params.len()];
        obj.loss_grad(&net.params, &mut grad)?;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let k = rng.gen_range(0..net.params.len());
            let h = 1e-6 * net.params[k].abs().max(1.0);
            let mut plus = net.params.clone();
            plus[k] += h;
            let mut minus = net.params.clone();
            minus[k] -= h;
            let fd = (obj.breakdown(&plus)?.total - obj.breakdown(&minus)?.total) / (2.0 * h);
            let denom = grad[k].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((grad[k] - fd).abs() / denom);
        }
        let ok = worst < 1e-5;
        println!("grad {name:<12} max relative gap {worst:.3e}  {}", verdict(ok));
        if !ok {
            failures.push(format!("{name}: gradient vs finite differences gap {worst:.3e}"));
        }
    }
    finish("grad", failures)
}

/// Discrete energy of the closed-form standing wave: exact value pi^2/4,
/// conserved to 1e-6 at every snapshot.
fn check_energy() -> Result<()> {
    let spec = make_problem("wave2d")?;
    let src = ExactSource { spec: &spec };
    let trace = energy_trace(&spec, &src, 11, 201)?;
    let exact = std::f64::consts::PI * std::f64::consts::PI / 4.0;
    let mut failures = Vec::new();
    let worst = trace
        .iter()
        .map(|&(_, h)| (h - exact).abs() / exact)
        .fold(0.0f64, f64::max);
    let drift = max_relative_drift(&trace);
    let ok = worst < 1e-6;
    println!("energy wave2d: worst snapshot gap {worst:.3e}, drift {drift:.3e}  {}", verdict(ok));
    if !ok {
        failures.push(format!("wave2d exact energy gap {worst:.3e} exceeds 1e-6"));
    }
    finish("energy", failures)
}

/// Train a 1D map against the linear monitor 1 + x on [0, 1] and compare to
/// the closed-form equidistribution sqrt(1 + 3 xi) - 1.
fn check_mesh() -> Result<()> {
    use rand::SeedableRng;
    let domain = Domain { lo: [0.0, 0.0], hi: [1.0, 1.0], t_end: 1.0 };
    let monitor = LinearMonitor { dim: 1, base: 1.0, slope: [1.0, 0.0] };
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
    let mut map = identity_map(NormalizerKind::ProductForm, &domain, 1, 1, 10, &mut rng)?;
    let points = uniform_points(&domain, 1, 160, 8, 8, Layout::Grid, 2)?;
    let emm = EmmConfig { tau: 1.0, ..EmmConfig::default() };
    let phase = PhaseConfig {
        budget: 500,
        adam_fraction: 0.7,
        ..PhaseConfig::default()
    };
    let report = train_mesh(&mut map, &monitor, &points, &emm, &phase)?;
    let mut worst: f64 = 0.0;
    let mut out = [0.0f64; 1];
    for i in 0..=100 {
        let xi = i as f64 / 100.0;
        map.map_point(&[xi], 0.5, &mut out)?;
        let exact = -1.0 + (1.0 + 3.0 * xi).sqrt();
        worst = worst.max((out[0] - exact).abs());
    }
    let ok = worst < 5e-2;
    println!(
        "mesh: relocation loss {:.3e} -> {:.3e}, max map gap {worst:.3e}  {}",
        report.initial_loss,
        report.final_loss,
        verdict(ok)
    );
    let failures = if ok {
        Vec::new()
    } else {
        vec![format!("trained map deviates from the analytic one by {worst:.3e} (limit 5e-2)")]
    };
    finish("mesh", failures)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn finish(suite: &str, failures: Vec<String>) -> Result<()> {
    if failures.is_empty() {
        println!("check {suite}: all assertions passed");
        Ok(())
    } else {
        Err(Error::Structural(format!(
            "check {suite} failed: {}",
            failures.join("; ")
        )))
    }
}

fn cmd_mesh_only(args: &MeshOnlyArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let spec = make_problem(&cfg.problem)?;
    let pipe = cfg.to_pipeline()?;
    let pretrained = match &args.net {
        Some(path) => Some(DenseNetwork::load(path)?),
        None => None,
    };
    let report = run_mesh_only(&spec, &pipe, pretrained)?;
    let dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let t_end = spec.domain.t_end;
    let per = if spec.dim == 1 { 101 } else { 21 };
    write_mesh_csv(&dir.join("mesh.csv"), &report.mesh, &[0.0, 0.5 * t_end, t_end], per)?;
    write_points_csv(&dir.join("points_initial.csv"), &report.base_points)?;
    write_points_csv(&dir.join("points_final.csv"), &report.points)?;
    report.mesh.net.save(&dir.join("mesh_net.ckpt"))?;
    if let Some(p) = &report.pretrain {
        println!("  pretrain loss    {:.6e} -> {:.6e}", p.initial_loss, p.final_loss);
    }
    println!(
        "  mesh loss        {:.6e} -> {:.6e}",
        report.mesh_report.initial_loss, report.mesh_report.final_loss
    );
    println!("  monitor shift    {:.6e}", report.monitor_shift);
    println!("  artifacts in     {}", dir.display());
    Ok(())
}
