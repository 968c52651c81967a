//! Higher-order directional derivatives of a dense network via truncated
//! Taylor arithmetic, cross-checked against central finite differences.
//!
//! A single forward pass with a degree-3 expansion seed yields the value and
//! the first three derivatives along any direction at once; this is the
//! machinery every residual evaluation in the crate is built on (third
//! derivatives appear in dispersive-equation residuals).
//!
//! Run with: `cargo run --release --example taylor_derivatives`

use eems_pinn::network::{DenseNetwork, NetShape};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> eems_pinn::Result<()> {
    let shape = NetShape::rectangle(2, 2, 12, 1)?;
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let net = DenseNetwork::glorot(shape, &mut rng);

    let point = [0.3, 0.7];
    let mut out = Vec::new();

    // A scalar view of the network along the x-axis through `point`.
    let f = |x: f64, out: &mut Vec<f64>| -> eems_pinn::Result<f64> {
        net.eval(&[x, point[1]], out)?;
        Ok(out[0])
    };

    // One probe returns value + first three derivatives along x.
    let jets = net.probe(&point, &[1.0, 0.0], 3)?;

    let h = 1e-3;
    let fm2 = f(point[0] - 2.0 * h, &mut out)?;
    let fm1 = f(point[0] - h, &mut out)?;
    let f0 = f(point[0], &mut out)?;
    let fp1 = f(point[0] + h, &mut out)?;
    let fp2 = f(point[0] + 2.0 * h, &mut out)?;
    let fd = [
        f0,
        (fp1 - fm1) / (2.0 * h),
        (fp1 - 2.0 * f0 + fm1) / (h * h),
        (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h),
    ];

    println!("derivatives of u(x, t) along x at (x, t) = ({}, {}):", point[0], point[1]);
    println!("{:>6} {:>22} {:>22} {:>12}", "order", "taylor probe", "central difference", "gap");
    for k in 0..=3 {
        let probe = jets[0].deriv(k);
        println!("{k:>6} {probe:>22.15e} {:>22.15e} {:>12.3e}", fd[k], (probe - fd[k]).abs());
    }

    // The same probe works along the time axis.
    let tjets = net.probe(&point, &[0.0, 1.0], 2)?;
    let g = |t: f64, out: &mut Vec<f64>| -> eems_pinn::Result<f64> {
        net.eval(&[point[0], t], out)?;
        Ok(out[0])
    };
    let gm = g(point[1] - h, &mut out)?;
    let gp = g(point[1] + h, &mut out)?;
    let g0 = g(point[1], &mut out)?;
    println!("\nalong t:");
    println!("  du/dt   probe {:>22.15e}  fd {:>22.15e}", tjets[0].deriv(1), (gp - gm) / (2.0 * h));
    println!(
        "  d2u/dt2 probe {:>22.15e}  fd {:>22.15e}",
        tjets[0].deriv(2),
        (gp - 2.0 * g0 + gm) / (h * h)
    );

    let worst = (0..=3).map(|k| (jets[0].deriv(k) - fd[k]).abs()).fold(0.0f64, f64::max);
    println!("\nworst gap over orders 0..3: {worst:.3e} (finite-difference truncation error)");
    Ok(())
}
