//! Experiment configuration files: per-benchmark defaults, lossless TOML
//! round-trips, and strict rejection of unknown keys.
//!
//! Every run of the `eems` binary is described by one of these documents; the
//! bundled files under `configs/` are exactly the per-benchmark defaults
//! shown here.  Rejecting unknown keys loudly protects long runs from silent
//! typos like `leanring_rate`.
//!
//! Run with: `cargo run --release --example experiment_config`

use eems_pinn::config::ExperimentConfig;

fn main() -> eems_pinn::Result<()> {
    let cfg = ExperimentConfig::for_problem("sg1d")?;
    let text = cfg.to_toml();
    println!("default configuration for the kink collision benchmark:\n");
    for line in text.lines().take(14) {
        println!("  {line}");
    }
    println!("  ...\n");

    // The document parses back to an identical configuration.
    let back = ExperimentConfig::parse(&text)?;
    assert_eq!(back, cfg);
    println!("round-trip through TOML reproduces the configuration exactly.");

    // Misspelled keys are configuration errors that name the offender.
    let bad = "[optimizer]\nadam_lr = 0.001\nleanring_rate = 0.5\n";
    match ExperimentConfig::parse(bad) {
        Err(e) => println!("\nmisspelled key rejected as intended:\n  {e}"),
        Ok(_) => panic!("unknown key must not parse"),
    }

    // A configuration lowers to the pipeline settings that drive training.
    let pipe = cfg.to_pipeline()?;
    println!(
        "\nlowered to pipeline settings: problem {}, sampler {}, {} interior points, \
         budgets {}/{}/{} over {} round(s)",
        cfg.problem,
        pipe.sampler,
        pipe.n_interior,
        pipe.pretrain.budget,
        pipe.mesh_phase.budget,
        pipe.retrain.budget,
        pipe.rounds
    );
    Ok(())
}
