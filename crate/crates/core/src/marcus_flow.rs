//! Marcus jump map.
//!
//! A jump with marks `R_r` moves the state along the unit-time flow of
//!
//! ```text
//! dxi_P/ds = -sum_r sigma_r(xi) R_r
//! dxi_Q/ds =  sum_r gamma_r(xi) R_r,     s in [0, 1]
//! ```
//!
//! Simultaneous marks on several channels are combined into one vector field
//! rather than applied one after another. The flow is integrated with the
//! classical fourth-order Runge-Kutta method on `substeps` equal steps.

use crate::error::{Error, Result};
use crate::hamiltonian::{rotate, HamiltonianSystem, KuboParams, PhaseState};

pub const DEFAULT_JUMP_SUBSTEPS: usize = 16;

/// Right-hand side of the jump ODE at flattened state `x = (p, q)`.
fn jump_field(system: &HamiltonianSystem, marks: &[f64], x: &[f64]) -> Vec<f64> {
    let n = system.dof();
    let (p, q) = x.split_at(n);
    let mut out = vec![0.0; 2 * n];
    for (r, &mark) in marks.iter().enumerate() {
        if mark == 0.0 {
            continue;
        }
        let sigma = system.sigma(r + 1, p, q);
        let gamma = system.gamma(r + 1, p, q);
        for i in 0..n {
            out[i] -= sigma[i] * mark;
            out[n + i] += gamma[i] * mark;
        }
    }
    out
}

/// Applies the Marcus jump map for `marks` (one entry per noise channel).
pub fn jump_flow(
    system: &HamiltonianSystem,
    state: &PhaseState,
    marks: &[f64],
    substeps: usize,
) -> Result<PhaseState> {
    system.check_state(state)?;
    if marks.len() != system.noise_count() {
        return Err(Error::Domain(format!(
            "expected {} marks, got {}",
            system.noise_count(),
            marks.len()
        )));
    }
    if substeps == 0 {
        return Err(Error::Domain("jump flow needs at least one substep".into()));
    }
    if !state.is_finite() {
        return Err(Error::Divergence("jump flow started from a non-finite state".into()));
    }
    if marks.iter().all(|&m| m == 0.0) {
        return Ok(state.clone());
    }

    let h = 1.0 / substeps as f64;
    let mut x = state.to_vec();
    let axpy = |x: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
    };
    for step in 0..substeps {
        let k1 = jump_field(system, marks, &x);
        let k2 = jump_field(system, marks, &axpy(&x, &k1, 0.5 * h));
        let k3 = jump_field(system, marks, &axpy(&x, &k2, 0.5 * h));
        let k4 = jump_field(system, marks, &axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "jump flow produced a non-finite state at substep {}",
                step + 1
            )));
        }
    }
    Ok(PhaseState::from_slice(&x))
}

/// Exact jump map of the Kubo oscillator: rotation by `beta * mark`.
pub fn kubo_jump_closed_form(params: KuboParams, state: &PhaseState, mark: f64) -> Result<PhaseState> {
    if state.dim() != 1 {
        return Err(Error::Domain(format!(
            "Kubo oscillator has one degree of freedom, got state of dimension {}",
            state.dim()
        )));
    }
    Ok(rotate(state, params.beta * mark))
}
