//! Hamiltonian systems with multiplicative noise in canonical coordinates.
//!
//! A system with `n` degrees of freedom and `m` noise channels is described by
//! `m + 1` terms. Term 0 is the drift Hamiltonian `H_0`, term `r >= 1` is the
//! Hamiltonian `H_r` coupled to noise channel `r`. Each term carries
//! `sigma_r = dH_r/dQ` and `gamma_r = dH_r/dP` so that
//!
//! ```text
//! dP = -sigma_0 dt - sum_r sigma_r <> dL^r
//! dQ =  gamma_0 dt + sum_r gamma_r <> dL^r
//! ```
//!
//! The gradients are supplied by the caller; nothing here differentiates
//! symbolically. Use [`gradient_mismatch`] to check them against finite
//! differences of the Hamiltonians.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type VectorField = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A point `(P, Q)` of phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PhaseState {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::Domain(format!(
                "p and q must have equal non-zero length, got {} and {}",
                p.len(),
                q.len()
            )));
        }
        let state = Self { p, q };
        if !state.is_finite() {
            return Err(Error::Domain("phase state has non-finite entries".into()));
        }
        Ok(state)
    }

    /// One degree of freedom.
    pub fn scalar(p: f64, q: f64) -> Self {
        Self { p: vec![p], q: vec![q] }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }

    /// Coordinates flattened as `(p_1..p_n, q_1..q_n)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.p.iter().chain(&self.q).copied().collect()
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self {
            p: x[..n].to_vec(),
            q: x[n..].to_vec(),
        }
    }

    /// Euclidean norm of the flattened coordinates.
    pub fn norm(&self) -> f64 {
        self.p.iter().chain(&self.q).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.p.iter().chain(&self.q).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `self - other` flattened.
    pub fn difference(&self, other: &PhaseState) -> Vec<f64> {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// `H_r` together with its partial gradients.
#[derive(Clone)]
pub struct HamiltonianTerm {
    pub hamiltonian: ScalarField,
    /// `dH/dQ`
    pub sigma: VectorField,
    /// `dH/dP`
    pub gamma: VectorField,
}

impl HamiltonianTerm {
    pub fn new<H, S, G>(hamiltonian: H, sigma: S, gamma: G) -> Self
    where
        H: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        S: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            hamiltonian: Arc::new(hamiltonian),
            sigma: Arc::new(sigma),
            gamma: Arc::new(gamma),
        }
    }
}

/// Which scalar to track along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// The system's monitored invariant (for Kubo, `(P^2 + Q^2) / 2`).
    Monitored,
    /// `H_r`, with `r = 0` the drift term.
    Term(usize),
}

#[derive(Clone)]
pub struct HamiltonianSystem {
    n: usize,
    terms: Vec<HamiltonianTerm>,
    monitored: Option<ScalarField>,
}

impl fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("n", &self.n)
            .field("m", &self.noise_count())
            .field("monitored", &self.monitored.is_some())
            .finish()
    }
}

impl HamiltonianSystem {
    /// `terms[0]` is the drift, `terms[r]` couples to channel `r`.
    pub fn new(n: usize, terms: Vec<HamiltonianTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("system needs at least one degree of freedom".into()));
        }
        if terms.len() < 2 {
            return Err(Error::InvalidSpec(
                "system needs a drift term and at least one noise term".into(),
            ));
        }
        Ok(Self {
            n,
            terms,
            monitored: None,
        })
    }

    pub fn with_monitored<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.monitored = Some(Arc::new(f));
        self
    }

    pub fn dof(&self) -> usize {
        self.n
    }

    pub fn noise_count(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn term(&self, r: usize) -> Result<&HamiltonianTerm> {
        self.terms.get(r).ok_or_else(|| {
            Error::Domain(format!(
                "term index {r} outside 0..={}",
                self.noise_count()
            ))
        })
    }

    pub(crate) fn check_state(&self, state: &PhaseState) -> Result<()> {
        if state.p.len() != self.n || state.q.len() != self.n {
            return Err(Error::Domain(format!(
                "state dimension ({}, {}) does not match system dimension {}",
                state.p.len(),
                state.q.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn sigma(&self, r: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
        (self.terms[r].sigma)(p, q)
    }

    pub fn gamma(&self, r: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
        (self.terms[r].gamma)(p, q)
    }

    /// `H_r(P, Q)`.
    pub fn hamiltonian_value(&self, r: usize, state: &PhaseState) -> Result<f64> {
        let term = self.term(r)?;
        self.check_state(state)?;
        Ok((term.hamiltonian)(&state.p, &state.q))
    }

    /// The monitored invariant, falling back to `H_0` when none was registered.
    pub fn monitored_value(&self, state: &PhaseState) -> Result<f64> {
        self.check_state(state)?;
        Ok(match &self.monitored {
            Some(f) => f(&state.p, &state.q),
            None => (self.terms[0].hamiltonian)(&state.p, &state.q),
        })
    }

    pub fn observe(&self, what: Observable, state: &PhaseState) -> Result<f64> {
        match what {
            Observable::Monitored => self.monitored_value(state),
            Observable::Term(r) => self.hamiltonian_value(r, state),
        }
    }
}

/// Largest relative mismatch between the supplied gradients of every term and
/// central finite differences of its Hamiltonian at `state`.
///
/// The relative error of each component is measured against
/// `max(|analytic|, 1)`.
pub fn gradient_mismatch(system: &HamiltonianSystem, state: &PhaseState, h: f64) -> Result<f64> {
    system.check_state(state)?;
    let n = system.dof();
    let mut worst: f64 = 0.0;
    for r in 0..=system.noise_count() {
        let term = system.term(r)?;
        let sigma = (term.sigma)(&state.p, &state.q);
        let gamma = (term.gamma)(&state.p, &state.q);
        for i in 0..n {
            let mut qp = state.q.clone();
            let mut qm = state.q.clone();
            qp[i] += h;
            qm[i] -= h;
            let dq = ((term.hamiltonian)(&state.p, &qp) - (term.hamiltonian)(&state.p, &qm))
                / (2.0 * h);
            worst = worst.max((dq - sigma[i]).abs() / sigma[i].abs().max(1.0));

            let mut pp = state.p.clone();
            let mut pm = state.p.clone();
            pp[i] += h;
            pm[i] -= h;
            let dp = ((term.hamiltonian)(&pp, &state.q) - (term.hamiltonian)(&pm, &state.q))
                / (2.0 * h);
            worst = worst.max((dp - gamma[i]).abs() / gamma[i].abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Parameters of the linear Kubo oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KuboParams {
    /// Drift rotation rate.
    pub alpha: f64,
    /// Noise coupling.
    pub beta: f64,
}

impl KuboParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "Kubo parameters must be finite, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// The Kubo oscillator
///
/// ```text
/// dP = -alpha Q dt - beta Q <> dL
/// dQ =  alpha P dt + beta P <> dL
/// ```
///
/// with `H_0 = alpha (P^2 + Q^2) / 2`, `H_1 = beta (P^2 + Q^2) / 2` and the
/// monitored invariant `(P^2 + Q^2) / 2`.
pub fn kubo_system(params: KuboParams) -> Result<HamiltonianSystem> {
    params.validate()?;
    let KuboParams { alpha, beta } = params;
    let term = |c: f64| {
        HamiltonianTerm::new(
            move |p, q| c * 0.5 * (p[0] * p[0] + q[0] * q[0]),
            move |_p, q| vec![c * q[0]],
            move |p, _q| vec![c * p[0]],
        )
    };
    Ok(HamiltonianSystem::new(1, vec![term(alpha), term(beta)])?
        .with_monitored(|p, q| 0.5 * (p[0] * p[0] + q[0] * q[0])))
}

/// Rotation of `state` by angle `theta`.
pub fn rotate(state: &PhaseState, theta: f64) -> PhaseState {
    let (s, c) = theta.sin_cos();
    let (p, q) = (state.p[0], state.q[0]);
    PhaseState::scalar(p * c - q * s, p * s + q * c)
}

/// Exact Kubo solution at time `t` from `initial` at time 0, given the noise
/// value `l_t = L(t)`: a rotation by `alpha t + beta L(t)`.
pub fn kubo_exact(params: KuboParams, initial: &PhaseState, t: f64, l_t: f64) -> Result<PhaseState> {
    if initial.dim() != 1 {
        return Err(Error::Domain(format!(
            "Kubo oscillator has one degree of freedom, got state of dimension {}",
            initial.dim()
        )));
    }
    Ok(rotate(initial, params.alpha * t + params.beta * l_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn kubo(alpha: f64, beta: f64) -> HamiltonianSystem {
        kubo_system(KuboParams::new(alpha, beta)).unwrap()
    }

    #[test]
    fn kubo_coefficients() {
        let sys = kubo(0.1, 0.3);
        assert_eq!(sys.dof(), 1);
        assert_eq!(sys.noise_count(), 1);
        assert!((sys.sigma(0, &[0.0], &[1.0])[0] - 0.1).abs() < 1e-15);
        assert!((sys.gamma(0, &[2.0], &[1.0])[0] - 0.2).abs() < 1e-15);
        assert!((sys.sigma(1, &[0.0], &[1.0])[0] - 0.3).abs() < 1e-15);
        assert!((sys.gamma(1, &[2.0], &[5.0])[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_params_vanish() {
        let sys = kubo(0.0, 0.0);
        for (p, q) in [(0.3, -1.2), (5.0, 4.0), (-2.0, 0.0)] {
            for r in 0..=1 {
                assert_eq!(sys.sigma(r, &[p], &[q])[0], 0.0);
                assert_eq!(sys.gamma(r, &[p], &[q])[0], 0.0);
                assert_eq!(sys.hamiltonian_value(r, &PhaseState::scalar(p, q)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn kubo_gradient_consistency_at_fixed_point() {
        let sys = kubo(0.1, 0.1);
        let state = PhaseState::scalar(0.3, 0.7);
        let h = 1e-5;
        let term = sys.term(0).unwrap();
        let fd = ((term.hamiltonian)(&[0.3], &[0.7 + h]) - (term.hamiltonian)(&[0.3], &[0.7 - h]))
            / (2.0 * h);
        let sigma = sys.sigma(0, &[0.3], &[0.7])[0];
        assert!((fd - sigma).abs() / sigma.abs() < 1e-6);
        assert!(gradient_mismatch(&sys, &state, h).unwrap() < 1e-6);
    }

    #[test]
    fn monitored_hamiltonian_values() {
        let sys = kubo(0.1, 0.1);
        assert_eq!(sys.monitored_value(&PhaseState::scalar(0.0, 1.0)).unwrap(), 0.5);
        assert_eq!(sys.monitored_value(&PhaseState::scalar(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(sys.monitored_value(&PhaseState::scalar(3.0, 4.0)).unwrap(), 12.5);
        assert!((sys.hamiltonian_value(0, &PhaseState::scalar(0.0, 1.0)).unwrap() - 0.05).abs() < 1e-16);
    }

    #[test]
    fn term_index_out_of_range() {
        let sys = kubo(0.1, 0.1);
        assert!(matches!(
            sys.hamiltonian_value(2, &PhaseState::scalar(0.0, 1.0)),
            Err(Error::Domain(_))
        ));
        assert!(sys.hamiltonian_value(0, &PhaseState::scalar(0.0, 1.0)).is_ok());
    }

    #[test]
    fn non_finite_params_rejected() {
        assert!(kubo_system(KuboParams::new(f64::NAN, 0.1)).is_err());
        assert!(kubo_system(KuboParams::new(0.1, f64::INFINITY)).is_err());
        assert!(kubo_system(KuboParams::new(-3.0, -0.5)).is_ok());
    }

    #[test]
    fn phase_state_validation() {
        assert!(PhaseState::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PhaseState::new(vec![], vec![]).is_err());
        assert!(PhaseState::new(vec![f64::NAN], vec![0.0]).is_err());
        let s = PhaseState::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(s.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(PhaseState::from_slice(&s.to_vec()), s);
    }

    #[test]
    fn kubo_exact_examples() {
        let params = KuboParams::new(0.1, 0.1);
        let x0 = PhaseState::scalar(0.0, 1.0);
        assert_eq!(kubo_exact(params, &x0, 0.0, 0.0).unwrap(), x0);

        let quarter = kubo_exact(KuboParams::new(0.1, 0.0), &x0, 5.0 * PI, 0.0).unwrap();
        assert!((quarter.p[0] + 1.0).abs() < 1e-14);
        assert!(quarter.q[0].abs() < 1e-14);

        let two_dof = PhaseState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(kubo_exact(params, &two_dof, 1.0, 0.0).is_err());
    }

    #[test]
    fn kubo_exact_jacobian_is_unimodular() {
        let params = KuboParams::new(0.37, -1.3);
        let (t, l) = (2.3, 0.81);
        let h = 1e-6;
        let f = |p: f64, q: f64| {
            let x = kubo_exact(params, &PhaseState::scalar(p, q), t, l).unwrap();
            (x.p[0], x.q[0])
        };
        let (p0, q0) = (0.4, -0.9);
        let (a, c) = {
            let (pp, qp) = f(p0 + h, q0);
            let (pm, qm) = f(p0 - h, q0);
            ((pp - pm) / (2.0 * h), (qp - qm) / (2.0 * h))
        };
        let (b, d) = {
            let (pp, qp) = f(p0, q0 + h);
            let (pm, qm) = f(p0, q0 - h);
            ((pp - pm) / (2.0 * h), (qp - qm) / (2.0 * h))
        };
        assert!((a * d - b * c - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn kubo_gradients_match_finite_differences(
            alpha in -2.0f64..2.0, beta in -2.0f64..2.0,
            p in -3.0f64..3.0, q in -3.0f64..3.0,
        ) {
            let sys = kubo(alpha, beta);
            let err = gradient_mismatch(&sys, &PhaseState::scalar(p, q), 1e-5).unwrap();
            prop_assert!(err < 1e-6, "mismatch {err}");
        }

        #[test]
        fn kubo_exact_is_group_action(
            p in -3.0f64..3.0, q in -3.0f64..3.0,
            t1 in 0.0f64..10.0, t2 in 0.0f64..10.0,
            l1 in -2.0f64..2.0, l2 in -2.0f64..2.0,
        ) {
            let params = KuboParams::new(0.1, 0.1);
            let x = PhaseState::scalar(p, q);
            let two = kubo_exact(params, &kubo_exact(params, &x, t1, l1).unwrap(), t2, l2).unwrap();
            let one = kubo_exact(params, &x, t1 + t2, l1 + l2).unwrap();
            prop_assert!((two.p[0] - one.p[0]).abs() <= 1e-14);
            prop_assert!((two.q[0] - one.q[0]).abs() <= 1e-14);
        }

        #[test]
        fn kubo_exact_preserves_monitored_hamiltonian(
            p in -3.0f64..3.0, q in -3.0f64..3.0, t in 0.0f64..200.0, l in -10.0f64..10.0,
        ) {
            prop_assume!(p.abs() + q.abs() > 1e-3);
            let params = KuboParams::new(0.1, 0.1);
            let sys = kubo_system(params).unwrap();
            let x = PhaseState::scalar(p, q);
            let h0 = sys.monitored_value(&x).unwrap();
            let h1 = sys.monitored_value(&kubo_exact(params, &x, t, l).unwrap()).unwrap();
            prop_assert!((h1 - h0).abs() <= 1e-14 * h0);
        }
    }
}
