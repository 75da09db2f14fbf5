//! Structure-preserving integrators for Hamiltonian stochastic differential
//! equations driven by compound Poisson noise in the Marcus sense.
//!
//! * [`levy_path`]: sampling and querying compound Poisson realizations.
//! * [`hamiltonian`]: system description, Kubo oscillator and its exact solution.
//! * [`marcus_flow`]: the Marcus jump map.
//! * [`integrators`]: symplectic / explicit Euler steps, fixed-grid and
//!   jump-adapted drivers.
//! * [`analysis`]: mean-square errors, order fits, Jacobian diagnostics.
//! * [`cli`]: experiment harness behind the `marcus-sde` binary.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod hamiltonian;
pub mod integrators;
pub mod levy_path;
pub mod marcus_flow;
mod svg;

pub use error::{Error, Result};
pub use hamiltonian::{kubo_exact, kubo_system, HamiltonianSystem, KuboParams, PhaseState};
pub use integrators::{integrate_fixed_grid, integrate_pathwise, Scheme, StepControls, Trajectory};
pub use levy_path::{sample_path, JumpEvent, LevyPath, LevyPathSpec};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
