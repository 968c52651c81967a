//! Pseudospectral reference solution for the dispersive benchmark, with its
//! conserved energy and interpolated point values.
//!
//! The dispersive equation has no elementary closed form for the sine initial
//! condition, so solution errors are measured against a Fourier collocation
//! integrator instead.  Its quadratic energy should stay at the initial value
//! pi/2 to integrator accuracy, and it exposes space-time interpolation with
//! derivatives so it can stand in anywhere a closed form could.
//!
//! Run with: `cargo run --release --example kdv_reference`

use eems_pinn::diagnostics::discrete_energy;
use eems_pinn::fields::KdvSource;
use eems_pinn::problems::kdv_ref::KdvReference;
use eems_pinn::problems::make_problem;

fn main() -> eems_pinn::Result<()> {
    let spec = make_problem("kdv1d")?;
    let reference = KdvReference::with_defaults(spec.domain.t_end)?;
    println!(
        "reference run: {} Fourier modes, step {:.3e}, {} stored snapshots",
        reference.modes(),
        reference.step(),
        reference.times().len()
    );

    let h0 = std::f64::consts::FRAC_PI_2;
    println!("\nquadratic energy along the run (initial value pi/2 = {h0:.12}):");
    println!("{:>8} {:>20} {:>12}", "t", "H(t)", "|H - pi/2|");
    let mut worst = 0.0f64;
    for (i, t) in reference.times().iter().enumerate() {
        let h = reference.snapshot_energy(i);
        worst = worst.max((h - h0).abs());
        if i % 10 == 0 {
            println!("{t:>8.3} {h:>20.15} {:>12.3e}", (h - h0).abs());
        }
    }
    println!("worst energy gap over all {} snapshots: {worst:.3e}", reference.times().len());

    // The tabulated solution interpolates in space and time with derivatives.
    let x = std::f64::consts::FRAC_PI_2;
    let t = 0.3;
    let e = reference.eval_derivs(x, t)?;
    println!("\ninterpolated at (x, t) = (pi/2, {t}):");
    println!("  u     = {:>+.10}", e.u);
    println!("  u_x   = {:>+.10}", e.ux);
    println!("  u_xxx = {:>+.10}", e.uxxx);
    println!("  u_t   = {:>+.10}", e.ut);

    // Wrapping the table as a field source plugs it into the same energy
    // quadrature the trained networks use.
    let src = KdvSource { reference: &reference };
    let h_quad = discrete_energy(&spec, &src, t, 201)?;
    println!(
        "\nenergy via the generic trapezoid quadrature at t = {t}: {h_quad:.12} \
         (gap to pi/2: {:.3e})",
        (h_quad - h0).abs()
    );
    Ok(())
}
