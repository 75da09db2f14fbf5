//! Error norms, convergence-order fits and symplecticity diagnostics.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fmt17;
use crate::hamiltonian::{HamiltonianSystem, Observable, PhaseState};
use crate::integrators::{Scheme, StepControls, Trajectory};

/// Perturbation used for finite-difference Jacobians.
pub const JACOBIAN_FD_STEP: f64 = 1e-6;

/// Root-mean-square Euclidean norm of a set of difference vectors:
/// `sqrt(mean_k |d_k|^2)`.
pub fn ms_error(differences: &[Vec<f64>]) -> Result<f64> {
    let first = differences
        .first()
        .ok_or_else(|| Error::Domain("no samples for mean-square error".into()))?;
    if differences.iter().any(|d| d.len() != first.len()) {
        return Err(Error::Domain("difference vectors have unequal dimensions".into()));
    }
    let total: f64 = differences
        .iter()
        .map(|d| d.iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok((total / differences.len() as f64).sqrt())
}

/// Least-squares fit of `log(error) = slope * log(dt) + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual of the fitted line in log space.
    pub residual: f64,
}

pub fn estimate_order(dts: &[f64], errors: &[f64]) -> Result<OrderFit> {
    if dts.len() != errors.len() {
        return Err(Error::Domain(format!(
            "{} step sizes but {} errors",
            dts.len(),
            errors.len()
        )));
    }
    if dts.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 points for an order fit, got {}",
            dts.len()
        )));
    }
    if dts
        .iter()
        .chain(errors)
        .any(|&v| !(v.is_finite() && v > 0.0))
    {
        return Err(Error::Domain("step sizes and errors must be finite and positive".into()));
    }

    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all step sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .fold(0.0, |m: f64, (x, y)| m.max((y - slope * x - intercept).abs()));

    Ok(OrderFit {
        dts: dts.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        residual,
    })
}

impl OrderFit {
    /// Max absolute log residual against a line of fixed slope `order`, with
    /// the intercept chosen by least squares.
    pub fn reference_residual(&self, order: f64) -> f64 {
        let offsets: Vec<f64> = self
            .dts
            .iter()
            .zip(&self.errors)
            .map(|(d, e)| e.ln() - order * d.ln())
            .collect();
        let c = offsets.iter().sum::<f64>() / offsets.len() as f64;
        offsets.iter().fold(0.0, |m: f64, o| m.max((o - c).abs()))
    }

    /// True when errors shrink with `dt`, allowing each error to exceed the one
    /// at the next larger step size by at most the fraction `slack`.
    pub fn decreasing_with_slack(&self, slack: f64) -> bool {
        let mut pairs: Vec<(f64, f64)> = self.dts.iter().copied().zip(self.errors.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + slack))
    }

    /// `dt,ms_error,log_dt,log_error`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dt,ms_error,log_dt,log_error")?;
        for (d, e) in self.dts.iter().zip(&self.errors) {
            writeln!(w, "{},{},{},{}", fmt17(*d), fmt17(*e), fmt17(d.ln()), fmt17(e.ln()))?;
        }
        Ok(())
    }

    /// `slope,intercept,residual`
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "slope,intercept,residual")?;
        writeln!(
            w,
            "{},{},{}",
            fmt17(self.slope),
            fmt17(self.intercept),
            fmt17(self.residual)
        )?;
        Ok(())
    }
}

/// `(t, value)` of an observable along a trajectory.
pub fn hamiltonian_series(
    system: &HamiltonianSystem,
    trajectory: &Trajectory,
    what: Observable,
) -> Result<Vec<(f64, f64)>> {
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(t, x)| Ok((*t, system.observe(what, x)?)))
        .collect()
}

/// Central finite-difference Jacobian of one step of `scheme`, in coordinates
/// `(p_1..p_n, q_1..q_n)`.
pub fn one_step_jacobian(
    system: &HamiltonianSystem,
    scheme: Scheme,
    state: &PhaseState,
    dt: f64,
    dl: &[f64],
    controls: &StepControls,
) -> Result<DMatrix<f64>> {
    system.check_state(state)?;
    let x = state.to_vec();
    let dim = x.len();
    let h = JACOBIAN_FD_STEP;
    let mut jac = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        let fp = scheme
            .step(system, &PhaseState::from_slice(&plus), dt, dl, controls)?
            .to_vec();
        let fm = scheme
            .step(system, &PhaseState::from_slice(&minus), dt, dl, controls)?
            .to_vec();
        for i in 0..dim {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Canonical skew matrix `((0, I), (-I, 0))` of size `2n`.
pub fn canonical_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Spectral norm of `J^T J_c J - J_c`.
pub fn symplectic_defect(jac: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = jac.shape();
    if rows != cols {
        return Err(Error::Domain(format!("Jacobian is {rows}x{cols}, not square")));
    }
    if rows == 0 || rows % 2 != 0 {
        return Err(Error::Domain(format!("Jacobian dimension {rows} is not even")));
    }
    let jc = canonical_form(rows / 2);
    let defect = jac.transpose() * &jc * jac - &jc;
    if rows == 2 {
        return Ok(spectral_norm_2x2(&defect));
    }
    Ok(defect
        .singular_values()
        .iter()
        .fold(0.0, |m: f64, s| m.max(*s)))
}

fn spectral_norm_2x2(m: &DMatrix<f64>) -> f64 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let frob2 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
    ((frob2 + disc) / 2.0).sqrt()
}
