//! Physics-informed neural network solver for conservative PDEs whose
//! collocation points are relocated by an energy-equidistributed moving mesh.
//!
//! The crate trains a dense tanh network to satisfy a PDE residual in the
//! least-squares collocation sense, measures how well the discrete energy of
//! the learned solution is conserved, and uses the energy density as a monitor
//! function to move collocation points where the solution is busy: a second
//! network learns a boundary-respecting coordinate map whose steady state
//! equidistributes the energy between mesh cells.
//!
//! Start with the runnable examples (`cargo run --release --example ...`) or
//! the `eems` binary (`run`, `compare`, `check`, `mesh-only` subcommands).

pub mod config;
pub mod diagnostics;
pub mod eep;
pub mod error;
pub mod fields;
pub mod jet;
pub mod network;
pub mod pipeline;
pub mod plot;
pub mod problems;
pub mod report;
pub mod real;
pub mod sampling;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
