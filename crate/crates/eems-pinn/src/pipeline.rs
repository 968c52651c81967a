//! End-to-end adaptive training pipeline.
//!
//! The driver pre-trains a solution network on a uniform space-time lattice,
//! then repeatedly checks how well the discrete energy is conserved.  When the
//! relative drift exceeds the configured tolerance, one adaptation round runs:
//! a monitor built from the frozen network drives either a trained coordinate
//! map (energy-equidistributing relocation) or density-weighted resampling,
//! the collocation points are relocated, and the solution network is retrained
//! from a warm start on the new points.  A plain (non-adaptive) sampler
//! retrains on the unchanged lattice so that every sampler consumes the same
//! solution-training budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::diagnostics::{
    default_quad_per_axis, energy_trace, max_relative_drift, ENERGY_CHECK_TIMES,
};
use crate::eep::{identity_map, train_mesh, EmmConfig, EnergyMonitor};
use crate::error::{Error, Result};
use crate::fields::NetSource;
use crate::network::{DenseNetwork, NetShape};
use crate::problems::ProblemSpec;
use crate::sampling::{
    map_points, uniform_points, wam_resample, Frame, Layout, MeshMap, NormalizerKind, PointSet,
};
use crate::training::{train_phase, LossWeights, PhaseConfig, PhaseReport, PinnLoss};

/// How collocation points are placed after the initial uniform lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    /// Keep the uniform lattice; adaptation rounds only retrain.
    Uniform,
    /// Redraw interior points from a density proportional to a power of the
    /// solution gradient magnitude.
    Wam,
    /// Relocate the lattice through a trained energy-equidistributing map.
    Eems,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::Wam => "wam",
            SamplerKind::Eems => "eems",
        })
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "wam" => Ok(SamplerKind::Wam),
            "eems" => Ok(SamplerKind::Eems),
            other => Err(Error::Config(format!(
                "unknown sampler `{other}`; expected uniform, wam, or eems"
            ))),
        }
    }
}

/// Every knob the driver needs.  Budgets are counted in optimizer iterations.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub sampler: SamplerKind,
    pub seed: u64,
    /// Interior / initial-time / boundary collocation point counts.
    pub n_interior: usize,
    pub n_initial: usize,
    pub n_boundary: usize,
    pub layout: Layout,
    /// Solution network: hidden layer count and width.
    pub hidden: usize,
    pub width: usize,
    /// Coordinate-map network: hidden layer count and width.
    pub mesh_hidden: usize,
    pub mesh_width: usize,
    pub normalizer: NormalizerKind,
    pub weights: LossWeights,
    /// Budget for the initial solution training phase.
    pub pretrain: PhaseConfig,
    /// Budget for training the coordinate map in each adaptation round.
    pub mesh_phase: PhaseConfig,
    /// Budget for retraining the solution after each relocation.
    pub retrain: PhaseConfig,
    /// Maximum number of adaptation rounds.
    pub rounds: usize,
    /// Relative energy-drift tolerance gating each round.  An infinite value
    /// disables adaptation entirely (plain physics-informed training).
    pub energy_tol: f64,
    pub emm: EmmConfig,
    /// Gradient-magnitude exponent for the weighted resampler.
    pub wam_exponent: f64,
    /// Quadrature nodes per axis for the energy check; 0 picks a default.
    pub quad_per_axis: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sampler: SamplerKind::Eems,
            seed: 0,
            n_interior: 256,
            n_initial: 32,
            n_boundary: 64,
            layout: Layout::Grid,
            hidden: 2,
            width: 20,
            mesh_hidden: 1,
            mesh_width: 10,
            normalizer: NormalizerKind::ProductForm,
            weights: LossWeights::default(),
            pretrain: PhaseConfig { budget: 400, ..PhaseConfig::default() },
            mesh_phase: PhaseConfig { budget: 150, ..PhaseConfig::default() },
            retrain: PhaseConfig { budget: 200, ..PhaseConfig::default() },
            rounds: 1,
            energy_tol: 1e-3,
            emm: EmmConfig::default(),
            wam_exponent: 1.0,
            quad_per_axis: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.emm.validate()?;
        if self.hidden == 0 || self.width == 0 {
            return Err(Error::Config("solution network needs at least one hidden layer and unit".into()));
        }
        if self.mesh_hidden == 0 || self.mesh_width == 0 {
            return Err(Error::Config("mesh network needs at least one hidden layer and unit".into()));
        }
        if self.energy_tol.is_nan() || self.energy_tol < 0.0 {
            return Err(Error::Config(format!(
                "energy tolerance must be non-negative, got {}",
                self.energy_tol
            )));
        }
        if self.wam_exponent < 1.0 {
            return Err(Error::Config(format!(
                "resampling exponent must be at least 1, got {}",
                self.wam_exponent
            )));
        }
        if self.quad_per_axis == 1 {
            return Err(Error::Config("quadrature needs at least 2 nodes per axis".into()));
        }
        Ok(())
    }

    fn quad(&self, dim: usize) -> usize {
        if self.quad_per_axis == 0 {
            default_quad_per_axis(dim)
        } else {
            self.quad_per_axis
        }
    }

    fn solution_shape(&self, spec: &ProblemSpec) -> Result<NetShape> {
        NetShape::rectangle(spec.dim + 1, self.hidden, self.width, spec.components)
    }
}

/// What happened in one adaptation round.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    /// Relative energy drift measured before the round acted.
    pub drift_before: f64,
    /// Whether the drift was already within tolerance (round did nothing).
    pub skipped: bool,
    /// Whether the collocation points changed this round.
    pub relocated: bool,
    /// Normalization estimate reported by the weighted resampler.
    pub wam_z: Option<f64>,
    pub mesh_report: Option<PhaseReport>,
    pub retrain: Option<PhaseReport>,
    /// Set when the round failed; the network is restored to its state from
    /// before the round and the run stops early.
    pub error: Option<String>,
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub problem: String,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub grid_warning: Option<String>,
    pub pretrain: PhaseReport,
    pub rounds: Vec<RoundRecord>,
    /// Energy trace of the final network on the check times.
    pub energy_trace: Vec<(f64, f64)>,
    pub drift_final: f64,
    /// The reference lattice the run started from.
    pub base_points: PointSet,
    /// The collocation points used by the last training phase.
    pub points: PointSet,
    pub net: DenseNetwork,
    /// Last trained coordinate map, for the relocating sampler.
    pub mesh: Option<MeshMap>,
}

impl RunReport {
    /// Loss of the most recent completed training phase.
    pub fn final_loss(&self) -> f64 {
        self.rounds
            .iter()
            .rev()
            .find_map(|r| r.retrain.as_ref().map(|p| p.final_loss))
            .unwrap_or(self.pretrain.final_loss)
    }

    /// Losses of every visited solution iterate, tagged with the phase name.
    pub fn loss_history(&self) -> Vec<(String, usize, f64)> {
        let mut out = Vec::new();
        for (i, &l) in self.pretrain.history.iter().enumerate() {
            out.push(("pretrain".to_string(), i, l));
        }
        for (r, round) in self.rounds.iter().enumerate() {
            if let Some(rep) = &round.retrain {
                for (i, &l) in rep.history.iter().enumerate() {
                    out.push((format!("round{}", r + 1), i, l));
                }
            }
        }
        out
    }
}

fn base_lattice(spec: &ProblemSpec, cfg: &PipelineConfig) -> Result<PointSet> {
    uniform_points(
        &spec.domain,
        spec.dim,
        cfg.n_interior,
        cfg.n_initial,
        cfg.n_boundary,
        cfg.layout,
        cfg.seed,
    )
}

fn measure_drift(
    spec: &ProblemSpec,
    net: &DenseNetwork,
    cfg: &PipelineConfig,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let src = NetSource { net };
    let trace = energy_trace(spec, &src, ENERGY_CHECK_TIMES, cfg.quad(spec.dim))?;
    let drift = max_relative_drift(&trace);
    Ok((trace, drift))
}

/// Body of one adaptation round, after the drift gate has decided to act.
/// Returns the record and the possibly relocated point set.
fn adapt_round(
    spec: &ProblemSpec,
    cfg: &PipelineConfig,
    net: &mut DenseNetwork,
    base: &PointSet,
    rng: &mut ChaCha20Rng,
    mesh_out: &mut Option<MeshMap>,
    drift: f64,
) -> Result<(RoundRecord, PointSet)> {
    let mut record = RoundRecord {
        drift_before: drift,
        skipped: false,
        relocated: false,
        wam_z: None,
        mesh_report: None,
        retrain: None,
        error: None,
    };

    let points = match cfg.sampler {
        SamplerKind::Uniform => base.clone(),
        SamplerKind::Wam => {
            let sample = wam_resample(
                net,
                &spec.domain,
                spec.dim,
                cfg.n_interior,
                cfg.wam_exponent,
                rng.gen(),
            )?;
            record.wam_z = Some(sample.z_estimate);
            record.relocated = true;
            let set = PointSet {
                dim: spec.dim,
                frame: Frame::Physical,
                interior: sample.points,
                initial: base.initial.clone(),
                boundary: base.boundary.clone(),
                faces: base.faces.clone(),
                grid_warning: None,
            };
            set.check(&spec.domain)?;
            set
        }
        SamplerKind::Eems => {
            let frozen = net.clone();
            let monitor = EnergyMonitor::build(spec, &frozen, cfg.emm.c_min)?;
            let mut map = identity_map(
                cfg.normalizer,
                &spec.domain,
                spec.dim,
                cfg.mesh_hidden,
                cfg.mesh_width,
                rng,
            )?;
            let mesh_report = train_mesh(&mut map, &monitor, base, &cfg.emm, &cfg.mesh_phase)?;
            log::info!(
                "mesh training: loss {:.3e} -> {:.3e}",
                mesh_report.initial_loss,
                mesh_report.final_loss
            );
            record.mesh_report = Some(mesh_report);
            record.relocated = true;
            let mapped = map_points(&map, base)?;
            *mesh_out = Some(map);
            mapped
        }
    };

    let shape = cfg.solution_shape(spec)?;
    let mut obj = PinnLoss::new(spec, &shape, &points, cfg.weights)?;
    let report = train_phase(&mut obj, &mut net.params, &cfg.retrain)?;
    log::info!(
        "retrain ({}): loss {:.3e} -> {:.3e}",
        cfg.sampler,
        report.initial_loss,
        report.final_loss
    );
    record.retrain = Some(report);
    Ok((record, points))
}

/// Run the full pipeline on one problem.
///
/// A failure inside an adaptation round is downgraded to a warning: the
/// network is restored to its state from before that round, the failure is
/// recorded, and the best result so far is returned.
pub fn run_pipeline(spec: &ProblemSpec, cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let base = base_lattice(spec, cfg)?;
    let grid_warning = base.grid_warning.clone();
    if let Some(w) = &grid_warning {
        log::warn!("{w}");
    }

    let shape = cfg.solution_shape(spec)?;
    let mut net = DenseNetwork::glorot(shape.clone(), &mut rng);
    let mut points = base.clone();

    let pretrain = {
        let mut obj = PinnLoss::new(spec, &shape, &points, cfg.weights)?;
        train_phase(&mut obj, &mut net.params, &cfg.pretrain)?
    };
    log::info!(
        "pretrain ({}): loss {:.3e} -> {:.3e}",
        spec.name,
        pretrain.initial_loss,
        pretrain.final_loss
    );

    let mut rounds = Vec::new();
    let mut mesh = None;
    for round in 0..cfg.rounds {
        let (_, drift) = measure_drift(spec, &net, cfg)?;
        if drift <= cfg.energy_tol {
            log::info!(
                "round {}: energy drift {drift:.3e} within tolerance {:.3e}, stopping",
                round + 1,
                cfg.energy_tol
            );
            rounds.push(RoundRecord {
                drift_before: drift,
                skipped: true,
                relocated: false,
                wam_z: None,
                mesh_report: None,
                retrain: None,
                error: None,
            });
            break;
        }
        log::info!(
            "round {}: energy drift {drift:.3e} exceeds tolerance {:.3e}, adapting",
            round + 1,
            cfg.energy_tol
        );
        let saved = net.params.clone();
        match adapt_round(spec, cfg, &mut net, &base, &mut rng, &mut mesh, drift) {
            Ok((record, new_points)) => {
                points = new_points;
                rounds.push(record);
            }
            Err(e) => {
                log::warn!("round {} failed, keeping previous network: {e}", round + 1);
                net.params = saved;
                rounds.push(RoundRecord {
                    drift_before: drift,
                    skipped: false,
                    relocated: false,
                    wam_z: None,
                    mesh_report: None,
                    retrain: None,
                    error: Some(e.to_string()),
                });
                break;
            }
        }
    }

    let (energy, drift_final) = measure_drift(spec, &net, cfg)?;
    Ok(RunReport {
        problem: spec.name.to_string(),
        sampler: cfg.sampler,
        seed: cfg.seed,
        grid_warning,
        pretrain,
        rounds,
        energy_trace: energy,
        drift_final,
        base_points: base,
        points,
        net,
        mesh,
    })
}

/// Run the three samplers with identical seeds, lattices, initial networks,
/// and budgets, so their errors can be compared fairly.
pub fn run_compare(spec: &ProblemSpec, cfg: &PipelineConfig) -> Result<Vec<RunReport>> {
    [SamplerKind::Uniform, SamplerKind::Wam, SamplerKind::Eems]
        .into_iter()
        .map(|sampler| {
            let mut c = cfg.clone();
            c.sampler = sampler;
            run_pipeline(spec, &c)
        })
        .collect()
}

/// Result of training only the coordinate map.
#[derive(Clone, Debug)]
pub struct MeshOnlyReport {
    /// Solution pre-training, when no network was supplied.
    pub pretrain: Option<PhaseReport>,
    pub mesh_report: PhaseReport,
    pub mesh: MeshMap,
    pub monitor_shift: f64,
    pub base_points: PointSet,
    pub points: PointSet,
    pub net: DenseNetwork,
}

/// Train a coordinate map for one problem and stop: pre-train a solution
/// network (unless one is supplied), build the energy monitor from it, train
/// the map, and relocate the lattice once.
pub fn run_mesh_only(
    spec: &ProblemSpec,
    cfg: &PipelineConfig,
    pretrained: Option<DenseNetwork>,
) -> Result<MeshOnlyReport> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let base = base_lattice(spec, cfg)?;
    let shape = cfg.solution_shape(spec)?;

    let (net, pretrain) = match pretrained {
        Some(net) => {
            if net.shape != shape {
                return Err(Error::Config(
                    "supplied network does not match the configured shape".into(),
                ));
            }
            (net, None)
        }
        None => {
            let mut net = DenseNetwork::glorot(shape.clone(), &mut rng);
            let mut obj = PinnLoss::new(spec, &shape, &base, cfg.weights)?;
            let report = train_phase(&mut obj, &mut net.params, &cfg.pretrain)?;
            (net, Some(report))
        }
    };

    let monitor = EnergyMonitor::build(spec, &net, cfg.emm.c_min)?;
    let monitor_shift = monitor.shift();
    let mut map = identity_map(
        cfg.normalizer,
        &spec.domain,
        spec.dim,
        cfg.mesh_hidden,
        cfg.mesh_width,
        &mut rng,
    )?;
    let mesh_report = train_mesh(&mut map, &monitor, &base, &cfg.emm, &cfg.mesh_phase)?;
    let points = map_points(&map, &base)?;
    Ok(MeshOnlyReport {
        pretrain,
        mesh_report,
        mesh: map,
        monitor_shift,
        base_points: base,
        points,
        net,
    })
}
