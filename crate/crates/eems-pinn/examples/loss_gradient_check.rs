//! Reverse-mode parameter gradient of the composite training loss, verified
//! against central finite differences of the loss value.
//!
//! The loss couples interior-residual, boundary, and initial-condition terms;
//! its gradient is produced by taping the forward pass once per point chunk
//! and sweeping the tape backwards, so it is exact for the evaluated loss.
//!
//! Run with: `cargo run --release --example loss_gradient_check`

use eems_pinn::problems::make_problem;
use eems_pinn::network::NetShape;
use eems_pinn::sampling::{uniform_points, Layout};
use eems_pinn::training::{LossWeights, Objective, PinnLoss};
use eems_pinn::network::DenseNetwork;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> eems_pinn::Result<()> {
    let spec = make_problem("kg1d")?;
    let points = uniform_points(&spec.domain, spec.dim, 32, 8, 8, Layout::Random, 5)?;
    let shape = NetShape::rectangle(spec.dim + 1, 1, 8, spec.components)?;
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let net = DenseNetwork::glorot(shape.clone(), &mut rng);

    let mut loss = PinnLoss::new(&spec, &shape, &points, LossWeights::default())?;
    let mut grad = vec![0.0; net.params.len()];
    let value = loss.value_grad(&net.params, &mut grad)?;
    println!("loss on {} parameters: {value:.6e}", net.params.len());
    println!("per-term means:");
    for (name, term) in loss.term_names().iter().zip(loss.last_terms()) {
        println!("  {name:<12} {term:.6e}");
    }

    // Probe a spread of parameter slots with central differences.
    let n = net.params.len();
    let picks = [0, n / 5, 2 * n / 5, 3 * n / 5, 4 * n / 5, n - 1];
    println!("\n{:>8} {:>22} {:>22} {:>12}", "index", "reverse mode", "central difference", "rel gap");
    let mut worst = 0.0f64;
    for &i in &picks {
        let h = 1e-6 * net.params[i].abs().max(1.0);
        let mut theta = net.params.clone();
        theta[i] += h;
        let up = loss.value(&theta)?;
        theta[i] = net.params[i] - h;
        let dn = loss.value(&theta)?;
        let fd = (up - dn) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(1e-8);
        worst = worst.max(rel);
        println!("{i:>8} {:>22.15e} {fd:>22.15e} {rel:>12.3e}", grad[i]);
    }
    println!("\nworst relative gap: {worst:.3e}");
    Ok(())
}
