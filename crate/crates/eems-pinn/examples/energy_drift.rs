//! Discrete energy along exact solutions: a conserved case and a driven case.
//!
//! The adaptive pipeline decides whether to relocate collocation points by
//! watching this quantity — trapezoid quadrature of the energy density over
//! the spatial domain at a fan of times.  For the two-dimensional standing
//! wave the energy is a known constant (pi^2/4); for the forced oscillator
//! the source term pumps energy in and out, so the trace moves.
//!
//! Run with: `cargo run --release --example energy_drift`

use eems_pinn::diagnostics::{energy_trace, max_relative_drift};
use eems_pinn::fields::ExactSource;
use eems_pinn::problems::make_problem;

fn main() -> eems_pinn::Result<()> {
    let wave = make_problem("wave2d")?;
    let trace = energy_trace(&wave, &ExactSource { spec: &wave }, 11, 101)?;
    let exact = std::f64::consts::PI * std::f64::consts::PI / 4.0;
    println!("standing wave on the unit square (energy should equal pi^2/4 = {exact:.12}):");
    println!("{:>8} {:>20} {:>14}", "t", "H(t)", "|H - pi^2/4|");
    for (t, h) in &trace {
        println!("{t:>8.2} {h:>20.15} {:>14.3e}", (h - exact).abs());
    }
    println!("max relative drift: {:.3e}\n", max_relative_drift(&trace));

    let forced = make_problem("kg1d_forced")?;
    let trace = energy_trace(&forced, &ExactSource { spec: &forced }, 11, 201)?;
    println!("forced oscillator (source term injects energy; conservation fails by design):");
    println!("{:>8} {:>20} {:>14}", "t", "H(t)", "H(t) - H(0)");
    let h0 = trace[0].1;
    for (t, h) in &trace {
        println!("{t:>8.2} {h:>20.12} {:>14.3e}", h - h0);
    }
    println!("max relative drift: {:.3e}", max_relative_drift(&trace));
    println!("\na drift above the configured tolerance is what triggers an adaptation round.");
    Ok(())
}
