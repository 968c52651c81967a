//! Experiment configuration: a flat-sectioned TOML format with validated
//! defaults for every field, strict rejection of unknown keys (the error
//! names the offending key), and a lossless round-trip through
//! serialization.  Per-problem default configurations carry the benchmark
//! network shapes.

use serde::{Deserialize, Serialize};

use crate::eep::{EmmConfig, EmmMode};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, SamplerKind};
use crate::problems::PROBLEM_NAMES;
use crate::sampling::{Layout, NormalizerKind};
use crate::training::{AdamConfig, LbfgsConfig, LossWeights, PhaseConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Benchmark name; see `problems::PROBLEM_NAMES`.
    pub problem: String,
    /// Output directory for run artifacts.
    pub out: String,
    pub seed: u64,
    /// `uniform`, `wam`, or `eems`.
    pub sampler: String,
    /// Maximum number of adaptation rounds.
    pub rounds: usize,
    pub points: PointsSection,
    pub solution_net: NetSection,
    pub mesh_net: NetSection,
    pub weights: WeightsSection,
    pub optimizer: OptimizerSection,
    pub emm: EmmSection,
    pub adapt: AdaptSection,
    pub diagnostics: DiagnosticsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsSection {
    pub interior: usize,
    pub initial: usize,
    pub boundary: usize,
    /// `grid` or `random`.
    pub layout: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    /// Hidden layer count.
    pub hidden: usize,
    /// Hidden layer width.
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub interior: [f64; 2],
    pub boundary: f64,
    pub initial: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub adam_lr: f64,
    /// Initial trial step of the quasi-Newton line search.
    pub lbfgs_step: f64,
    /// Fraction of each budget spent in the moment-averaged stage;
    /// 1.0 disables the quasi-Newton stage.
    pub adam_fraction: f64,
    /// Budgets for pre-training, map training, and retraining.
    pub pretrain_iters: usize,
    pub mesh_iters: usize,
    pub retrain_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmmSection {
    pub tau: f64,
    /// `location` or `velocity`.
    pub mode: String,
    /// Diagonal regularization of the velocity-mode response matrix.
    pub delta: f64,
    /// Monitor positivity floor.
    pub c_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    /// Relative energy-drift tolerance gating each round; `inf` disables
    /// adaptation.
    pub energy_tol: f64,
    /// Gradient-magnitude exponent of the weighted resampler.
    pub wam_exponent: f64,
    /// Boundary normalizer: `product`, `r-equivalence`, or
    /// `normalized-product`.
    pub normalizer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Quadrature nodes per axis for energy checks; 0 picks the default.
    pub quad_per_axis: usize,
    /// Error-grid nodes per spatial axis; 0 picks the default.
    pub error_per_axis: usize,
    /// Error-grid time samples; 0 picks the default.
    pub error_times: usize,
}

impl Default for PointsSection {
    fn default() -> Self {
        PointsSection { interior: 1000, initial: 100, boundary: 100, layout: "grid".into() }
    }
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection { hidden: 5, width: 40 }
    }
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection { interior: [1.0, 1.0], boundary: 1.0, initial: [1.0, 1.0] }
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            adam_lr: 1e-3,
            lbfgs_step: 1.0,
            adam_fraction: 0.8,
            pretrain_iters: 300,
            mesh_iters: 350,
            retrain_iters: 350,
        }
    }
}

impl Default for EmmSection {
    fn default() -> Self {
        let d = EmmConfig::default();
        EmmSection { tau: d.tau, mode: "location".into(), delta: d.delta, c_min: d.c_min }
    }
}

impl Default for AdaptSection {
    fn default() -> Self {
        AdaptSection { energy_tol: 1e-3, wam_exponent: 1.0, normalizer: "product".into() }
    }
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { quad_per_axis: 0, error_per_axis: 0, error_times: 0 }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: "kg1d".into(),
            out: "runs/kg1d".into(),
            seed: 0,
            sampler: "eems".into(),
            rounds: 1,
            points: PointsSection::default(),
            solution_net: NetSection::default(),
            mesh_net: NetSection { hidden: 4, width: 20 },
            weights: WeightsSection::default(),
            optimizer: OptimizerSection { adam_fraction: 1.0, ..OptimizerSection::default() },
            emm: EmmSection::default(),
            adapt: AdaptSection::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse from TOML text; unknown keys are rejected with their name.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Benchmark defaults: the per-problem network shapes, optimizer split,
    /// and desk-scale budgets.
    pub fn for_problem(problem: &str) -> Result<Self> {
        if !PROBLEM_NAMES.contains(&problem) {
            return Err(Error::UnknownProblem(problem.to_string()));
        }
        let mut cfg = ExperimentConfig {
            problem: problem.to_string(),
            out: format!("runs/{problem}"),
            ..ExperimentConfig::default()
        };
        let o = &mut cfg.optimizer;
        match problem {
            // Pure moment-averaged training for this benchmark.
            "kg1d" => {}
            "kg1d_forced" => {
                cfg.solution_net = NetSection { hidden: 5, width: 20 };
                *o = OptimizerSection {
                    lbfgs_step: 0.5,
                    adam_fraction: 0.8,
                    pretrain_iters: 500,
                    mesh_iters: 600,
                    retrain_iters: 1000,
                    ..OptimizerSection::default()
                };
            }
            "sg1d" => {
                cfg.solution_net = NetSection { hidden: 5, width: 50 };
                *o = OptimizerSection {
                    lbfgs_step: 0.005,
                    adam_fraction: 0.8,
                    pretrain_iters: 500,
                    mesh_iters: 250,
                    retrain_iters: 1000,
                    ..OptimizerSection::default()
                };
            }
            "kdv1d" => {
                cfg.solution_net = NetSection { hidden: 8, width: 80 };
                cfg.mesh_net = NetSection { hidden: 4, width: 30 };
                *o = OptimizerSection {
                    lbfgs_step: 0.5,
                    adam_fraction: 0.8,
                    pretrain_iters: 400,
                    mesh_iters: 300,
                    retrain_iters: 600,
                    ..OptimizerSection::default()
                };
            }
            "wave2d" => {
                cfg.solution_net = NetSection { hidden: 6, width: 50 };
                cfg.mesh_net = NetSection { hidden: 4, width: 40 };
                cfg.rounds = 2;
                *o = OptimizerSection {
                    lbfgs_step: 0.5,
                    adam_fraction: 0.8,
                    pretrain_iters: 400,
                    mesh_iters: 250,
                    retrain_iters: 400,
                    ..OptimizerSection::default()
                };
            }
            "sg2d" => {
                *o = OptimizerSection {
                    lbfgs_step: 0.005,
                    adam_fraction: 0.8,
                    pretrain_iters: 400,
                    mesh_iters: 50,
                    retrain_iters: 400,
                    ..OptimizerSection::default()
                };
            }
            _ => unreachable!("all known problems handled"),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn layout(&self) -> Result<Layout> {
        match self.points.layout.as_str() {
            "grid" => Ok(Layout::Grid),
            "random" => Ok(Layout::Random),
            other => Err(Error::Config(format!(
                "unknown layout `{other}`; expected grid or random"
            ))),
        }
    }

    fn emm_mode(&self) -> Result<EmmMode> {
        match self.emm.mode.as_str() {
            "location" => Ok(EmmMode::Location),
            "velocity" => Ok(EmmMode::Velocity),
            other => Err(Error::Config(format!(
                "unknown relocation mode `{other}`; expected location or velocity"
            ))),
        }
    }

    fn normalizer(&self) -> Result<NormalizerKind> {
        match self.adapt.normalizer.as_str() {
            "product" => Ok(NormalizerKind::ProductForm),
            "r-equivalence" => Ok(NormalizerKind::REquivalence),
            "normalized-product" => Ok(NormalizerKind::NormalizedProduct),
            other => Err(Error::Config(format!(
                "unknown normalizer `{other}`; expected product, r-equivalence, or normalized-product"
            ))),
        }
    }

    pub fn sampler(&self) -> Result<SamplerKind> {
        self.sampler.parse()
    }

    /// Effective error-grid resolution `(per_axis, n_times)`.
    pub fn error_grid(&self, dim: usize) -> (usize, usize) {
        let (pa, nt) = crate::report::default_error_grid(dim);
        (
            if self.diagnostics.error_per_axis == 0 {
                pa
            } else {
                self.diagnostics.error_per_axis
            },
            if self.diagnostics.error_times == 0 { nt } else { self.diagnostics.error_times },
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !PROBLEM_NAMES.contains(&self.problem.as_str()) {
            return Err(Error::UnknownProblem(self.problem.clone()));
        }
        self.to_pipeline().map(|_| ())
    }

    /// Lower the configuration into driver settings.
    pub fn to_pipeline(&self) -> Result<PipelineConfig> {
        let adam = AdamConfig { lr: self.optimizer.adam_lr, ..AdamConfig::default() };
        let lbfgs = LbfgsConfig { step0: self.optimizer.lbfgs_step, ..LbfgsConfig::default() };
        let phase = |budget: usize| PhaseConfig {
            budget,
            adam_fraction: self.optimizer.adam_fraction,
            adam,
            lbfgs,
        };
        let cfg = PipelineConfig {
            sampler: self.sampler()?,
            seed: self.seed,
            n_interior: self.points.interior,
            n_initial: self.points.initial,
            n_boundary: self.points.boundary,
            layout: self.layout()?,
            hidden: self.solution_net.hidden,
            width: self.solution_net.width,
            mesh_hidden: self.mesh_net.hidden,
            mesh_width: self.mesh_net.width,
            normalizer: self.normalizer()?,
            weights: LossWeights {
                interior: self.weights.interior,
                boundary: self.weights.boundary,
                initial: self.weights.initial,
            },
            pretrain: phase(self.optimizer.pretrain_iters),
            mesh_phase: phase(self.optimizer.mesh_iters),
            retrain: phase(self.optimizer.retrain_iters),
            rounds: self.rounds,
            energy_tol: self.adapt.energy_tol,
            emm: EmmConfig {
                tau: self.emm.tau,
                mode: self.emm_mode()?,
                delta: self.emm.delta,
                c_min: self.emm.c_min,
            },
            wam_exponent: self.adapt.wam_exponent,
            quad_per_axis: self.diagnostics.quad_per_axis,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_problem;

    #[test]
    fn every_benchmark_has_a_valid_default_configuration() {
        let expected_shapes = [
            ("kg1d", (5, 40), (4, 20)),
            ("kg1d_forced", (5, 20), (4, 20)),
            ("sg1d", (5, 50), (4, 20)),
            ("kdv1d", (8, 80), (4, 30)),
            ("wave2d", (6, 50), (4, 40)),
            ("sg2d", (5, 40), (4, 20)),
        ];
        for (name, sol, mesh) in expected_shapes {
            let cfg = ExperimentConfig::for_problem(name).unwrap();
            assert_eq!((cfg.solution_net.hidden, cfg.solution_net.width), sol, "{name}");
            assert_eq!((cfg.mesh_net.hidden, cfg.mesh_net.width), mesh, "{name}");
            let pipe = cfg.to_pipeline().unwrap();
            assert_eq!(pipe.seed, cfg.seed);
            make_problem(name).unwrap();
        }
        // The pure-Adam benchmark disables the quasi-Newton stage.
        let kg = ExperimentConfig::for_problem("kg1d").unwrap();
        assert_eq!(kg.optimizer.adam_fraction, 1.0);
        let w2 = ExperimentConfig::for_problem("wave2d").unwrap();
        assert_eq!(w2.rounds, 2);
    }

    #[test]
    fn serialization_round_trips_semantically() {
        for name in crate::problems::PROBLEM_NAMES {
            let cfg = ExperimentConfig::for_problem(name).unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::parse(&text).unwrap();
            assert_eq!(back, cfg, "{name} round trip");
        }
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = ExperimentConfig::parse("bogus_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "message: {err}");
        let err =
            ExperimentConfig::parse("[points]\nmystery = 1\n").unwrap_err();
        assert!(err.to_string().contains("mystery"), "message: {err}");
    }

    #[test]
    fn invalid_enumerations_are_named_in_the_error() {
        let mut cfg = ExperimentConfig::for_problem("kg1d").unwrap();
        cfg.sampler = "sideways".into();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("sideways"));
        let mut cfg = ExperimentConfig::for_problem("kg1d").unwrap();
        cfg.adapt.normalizer = "bridge".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("bridge"));
        let mut cfg = ExperimentConfig::for_problem("kg1d").unwrap();
        cfg.points.layout = "spiral".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("spiral"));
    }

    #[test]
    fn pipeline_lowering_copies_every_knob() {
        let mut cfg = ExperimentConfig::for_problem("kg1d_forced").unwrap();
        cfg.seed = 99;
        cfg.points.interior = 123;
        cfg.optimizer.adam_lr = 0.005;
        cfg.adapt.energy_tol = 0.25;
        cfg.emm.tau = 0.7;
        let pipe = cfg.to_pipeline().unwrap();
        assert_eq!(pipe.seed, 99);
        assert_eq!(pipe.n_interior, 123);
        assert_eq!(pipe.pretrain.adam.lr, 0.005);
        assert_eq!(pipe.pretrain.budget, 500);
        assert_eq!(pipe.mesh_phase.budget, 600);
        assert_eq!(pipe.retrain.budget, 1000);
        assert_eq!(pipe.pretrain.lbfgs.step0, 0.5);
        assert_eq!(pipe.energy_tol, 0.25);
        assert_eq!(pipe.emm.tau, 0.7);
    }

    #[test]
    fn bundled_config_files_match_the_benchmark_defaults() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in crate::problems::PROBLEM_NAMES {
            let path = root.join(format!("{name}.toml"));
            let cfg = ExperimentConfig::load(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(cfg, ExperimentConfig::for_problem(name).unwrap(), "{name}");
        }
    }

    #[test]
    fn partial_files_inherit_defaults_for_missing_sections() {
        let cfg = ExperimentConfig::parse(
            "problem = \"sg1d\"\nseed = 5\n[solution_net]\nhidden = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.problem, "sg1d");
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.solution_net.hidden, 2);
        // Unspecified width falls back to the section default.
        assert_eq!(cfg.solution_net.width, 40);
        assert_eq!(cfg.points.interior, 1000);
    }
}
