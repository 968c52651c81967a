//! Train a physics-informed network on a fixed uniform lattice and measure
//! the solution error against the closed form.
//!
//! This is the non-adaptive baseline: residual, boundary, and initial terms
//! on a uniform space-time point set, a moment-averaged descent stage, then a
//! quasi-Newton polish.  The forced-oscillator benchmark has an exact
//! solution, so the relative L2 error is computable directly.
//!
//! Run with: `cargo run --release --example train_uniform_pinn`

use eems_pinn::diagnostics::relative_l2_error;
use eems_pinn::fields::{ExactSource, NetSource};
use eems_pinn::network::{DenseNetwork, NetShape};
use eems_pinn::problems::make_problem;
use eems_pinn::sampling::{uniform_points, Layout};
use eems_pinn::training::{train_phase, LossWeights, PhaseConfig, PinnLoss};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> eems_pinn::Result<()> {
    let spec = make_problem("kg1d_forced")?;
    let points = uniform_points(&spec.domain, spec.dim, 256, 32, 64, Layout::Grid, 0)?;
    println!(
        "problem {}: {} interior, {} initial, {} boundary points",
        spec.name,
        points.n_interior(),
        points.n_initial(),
        points.n_boundary()
    );

    let shape = NetShape::rectangle(spec.dim + 1, 2, 20, spec.components)?;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut net = DenseNetwork::glorot(shape.clone(), &mut rng);

    let mut loss = PinnLoss::new(&spec, &shape, &points, LossWeights::default())?;
    let phase = PhaseConfig { budget: 300, adam_fraction: 0.8, ..PhaseConfig::default() };
    let report = train_phase(&mut loss, &mut net.params, &phase)?;

    println!("\nloss every 30 iterations:");
    for (i, l) in report.history.iter().enumerate() {
        if i % 30 == 0 || i + 1 == report.history.len() {
            println!("  {i:>4}  {l:.6e}");
        }
    }
    println!(
        "\n{} descent iterations, then quasi-Newton polish: {:.6e} -> {:.6e}",
        report.adam_iterations, report.initial_loss, report.final_loss
    );

    let err = relative_l2_error(
        &NetSource { net: &net },
        &ExactSource { spec: &spec },
        &spec.domain,
        spec.dim,
        101,
        11,
    )?;
    println!("relative L2 error against the exact solution: {err:.4e}");
    println!(
        "(a demonstration budget — the bundled configuration files train much longer, \
         and the adaptive_pipeline example adds point relocation on top)"
    );
    Ok(())
}
