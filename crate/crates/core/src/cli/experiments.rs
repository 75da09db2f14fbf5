//! The numerical experiments behind each subcommand, free of any file I/O.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{estimate_order, ms_error, one_step_jacobian, symplectic_defect, OrderFit};
use crate::error::{Error, Result};
use crate::hamiltonian::{kubo_exact, kubo_system, KuboParams, Observable, PhaseState};
use crate::integrators::{
    integrate_fixed_grid, integrate_fixed_grid_partial, integrate_pathwise, kubo_exact_trajectory,
    Scheme, SchemeTag, StepControls, Trajectory,
};
use crate::levy_path::{sample_path, LevyPath, LevyPathSpec};

/// Shared model and noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KuboExperiment {
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub seed: u64,
    pub p0: f64,
    pub q0: f64,
}

impl Default for KuboExperiment {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            dt: 0.08,
            t_end: 200.0,
            lambda: 5.0,
            sigma: 0.2,
            seed: 1,
            p0: 0.0,
            q0: 1.0,
        }
    }
}

impl KuboExperiment {
    pub fn params(&self) -> KuboParams {
        KuboParams::new(self.alpha, self.beta)
    }

    pub fn initial(&self) -> PhaseState {
        PhaseState::scalar(self.p0, self.q0)
    }

    pub fn path_spec(&self, seed: u64) -> LevyPathSpec {
        LevyPathSpec::new(self.lambda, self.sigma, 1, seed)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidSpec(format!("T must be >= 0, got {}", self.t_end)));
        }
        if !(self.p0.is_finite() && self.q0.is_finite()) {
            return Err(Error::InvalidSpec("initial state must be finite".into()));
        }
        self.path_spec(self.seed).validate()
    }
}

/// Exact, symplectic and explicit trajectories on one shared noise path.
#[derive(Debug)]
pub struct OrbitRun {
    pub path: Option<LevyPath>,
    pub exact: Trajectory,
    pub symplectic: Trajectory,
    /// Possibly truncated if the explicit scheme diverged.
    pub explicit: Trajectory,
    pub explicit_failure: Option<Error>,
}

pub fn orbit(exp: &KuboExperiment) -> Result<OrbitRun> {
    exp.validate()?;
    let controls = StepControls::new(exp.dt);
    controls.validate()?;
    let system = kubo_system(exp.params())?;
    let x0 = exp.initial();

    if exp.t_end == 0.0 {
        let single = |scheme| Trajectory {
            times: vec![0.0],
            states: vec![x0.clone()],
            scheme,
            jumps_per_step: Vec::new(),
            left_limits: Vec::new(),
        };
        return Ok(OrbitRun {
            path: None,
            exact: single(SchemeTag::Exact),
            symplectic: single(SchemeTag::Symplectic),
            explicit: single(SchemeTag::Explicit),
            explicit_failure: None,
        });
    }

    let path = sample_path(exp.path_spec(exp.seed), exp.t_end)?;
    let symplectic =
        integrate_fixed_grid(&system, Scheme::Symplectic, &x0, 0.0, exp.t_end, &path, &controls)?;
    let (explicit, explicit_failure) =
        integrate_fixed_grid_partial(&system, Scheme::Explicit, &x0, 0.0, exp.t_end, &path, &controls)?;
    let exact = kubo_exact_trajectory(exp.params(), &x0, &symplectic.times, &path)?;
    Ok(OrbitRun {
        path: Some(path),
        exact,
        symplectic,
        explicit,
        explicit_failure,
    })
}

/// Row of the Hamiltonian table: `(t, H_exact, H_symplectic, H_explicit)`.
pub type HamiltonianRow = (f64, f64, f64, f64);

/// Monitored Hamiltonian of the three orbit trajectories. Rows stop where the
/// explicit trajectory stops.
pub fn hamiltonian_rows(exp: &KuboExperiment, run: &OrbitRun) -> Result<Vec<HamiltonianRow>> {
    let system = kubo_system(exp.params())?;
    let h = |x: &PhaseState| system.observe(Observable::Monitored, x);
    (0..run.explicit.len())
        .map(|j| {
            Ok((
                run.exact.times[j],
                h(&run.exact.states[j])?,
                h(&run.symplectic.states[j])?,
                h(&run.explicit.states[j])?,
            ))
        })
        .collect()
}

/// Integrator used by the convergence experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergeScheme {
    /// Jump-adapted symplectic Euler with the Marcus jump map.
    Pathwise,
    /// Fixed-grid symplectic Euler with raw increments.
    Symplectic,
    /// Fixed-grid explicit Euler with raw increments.
    Explicit,
}

impl std::str::FromStr for ConvergeScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pathwise" => Ok(Self::Pathwise),
            "symplectic" => Ok(Self::Symplectic),
            "explicit" => Ok(Self::Explicit),
            other => Err(format!(
                "unknown scheme {other:?} (expected pathwise, symplectic or explicit)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub model: KuboExperiment,
    pub dts: Vec<f64>,
    pub samples: usize,
    pub scheme: ConvergeScheme,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            model: KuboExperiment {
                t_end: 10.0,
                ..KuboExperiment::default()
            },
            dts: vec![0.08, 0.04, 0.02, 0.01, 0.005],
            samples: 500,
            scheme: ConvergeScheme::Pathwise,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of Monte-Carlo cell `(dt_index, sample_index)`.
pub fn cell_seed(seed: u64, dt_index: usize, sample_index: usize) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ dt_index as u64);
    splitmix64(h ^ (sample_index as u64).rotate_left(32))
}

/// End-time error of one sample path against the exact Kubo solution.
fn end_error(cfg: &ConvergeConfig, dt: f64, seed: u64) -> Result<Vec<f64>> {
    let model = &cfg.model;
    let system = kubo_system(model.params())?;
    let x0 = model.initial();
    let t_end = model.t_end;
    let path = sample_path(model.path_spec(seed), t_end)?;
    let controls = StepControls::new(dt);
    let traj = match cfg.scheme {
        ConvergeScheme::Pathwise => integrate_pathwise(&system, &x0, 0.0, t_end, &path, &controls)?,
        ConvergeScheme::Symplectic => {
            integrate_fixed_grid(&system, Scheme::Symplectic, &x0, 0.0, t_end, &path, &controls)?
        }
        ConvergeScheme::Explicit => {
            integrate_fixed_grid(&system, Scheme::Explicit, &x0, 0.0, t_end, &path, &controls)?
        }
    };
    let exact = kubo_exact(model.params(), &x0, t_end, path.value_at(1, t_end)?)?;
    let (_, end) = traj.last().expect("trajectory is never empty");
    Ok(end.difference(&exact))
}

/// Mean-square end-time error for each step size, and the log-log order fit.
pub fn converge(cfg: &ConvergeConfig) -> Result<OrderFit> {
    if cfg.samples < 2 {
        return Err(Error::InvalidSpec(format!(
            "need at least 2 samples, got {}",
            cfg.samples
        )));
    }
    if cfg.dts.len() < 3 {
        return Err(Error::InvalidSpec(format!(
            "need at least 3 step sizes, got {}",
            cfg.dts.len()
        )));
    }
    if cfg.dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::InvalidSpec("step sizes must be positive".into()));
    }
    if !(cfg.model.t_end.is_finite() && cfg.model.t_end > 0.0) {
        return Err(Error::InvalidSpec("T must be positive for a convergence run".into()));
    }
    cfg.model.validate()?;

    let mut errors = Vec::with_capacity(cfg.dts.len());
    for (i, &dt) in cfg.dts.iter().enumerate() {
        let diffs: Vec<Vec<f64>> = (0..cfg.samples)
            .into_par_iter()
            .map(|k| end_error(cfg, dt, cell_seed(cfg.model.seed, i, k)))
            .collect::<Result<_>>()?;
        errors.push(ms_error(&diffs)?);
    }
    estimate_order(&cfg.dts, &errors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Random,
    /// `dt = dL = 0`, the identity map.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectRow {
    pub kind: SampleKind,
    pub p: f64,
    pub q: f64,
    pub dt: f64,
    pub dl: f64,
    /// `alpha dt + beta dL`
    pub a: f64,
    pub symplectic: f64,
    pub explicit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticCheckConfig {
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SymplecticCheckConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            samples: 1000,
            seed: 1,
        }
    }
}

pub const CONTROL_ROWS: usize = 5;

/// Symplectic defect of both one-step maps at random `(P, Q) in [-2, 2]^2`,
/// `dt in (0, 0.1]`, `dL in [-1, 1]`, followed by identity-map control rows.
pub fn symplectic_check(cfg: &SymplecticCheckConfig) -> Result<Vec<DefectRow>> {
    if cfg.samples == 0 {
        return Err(Error::InvalidSpec("need at least 1 sample".into()));
    }
    let params = KuboParams::new(cfg.alpha, cfg.beta);
    let system = kubo_system(params)?;
    let controls = StepControls::new(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut rows = Vec::with_capacity(cfg.samples + CONTROL_ROWS);
    for i in 0..cfg.samples + CONTROL_ROWS {
        let kind = if i < cfg.samples {
            SampleKind::Random
        } else {
            SampleKind::Control
        };
        let p = rng.random_range(-2.0..=2.0);
        let q = rng.random_range(-2.0..=2.0);
        let (dt, dl) = match kind {
            SampleKind::Random => (
                0.1 * (1.0 - rng.random::<f64>()),
                rng.random_range(-1.0..=1.0),
            ),
            SampleKind::Control => (0.0, 0.0),
        };
        let x = PhaseState::scalar(p, q);
        let defect = |scheme| -> Result<f64> {
            symplectic_defect(&one_step_jacobian(&system, scheme, &x, dt, &[dl], &controls)?)
        };
        rows.push(DefectRow {
            kind,
            p,
            q,
            dt,
            dl,
            a: cfg.alpha * dt + cfg.beta * dl,
            symplectic: defect(Scheme::Symplectic)?,
            explicit: defect(Scheme::Explicit)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectSummary {
    pub max_symplectic: f64,
    pub max_explicit: f64,
    /// Smallest explicit defect over random rows with `|a| >= 0.05`
    /// (`None` if there are no such rows).
    pub min_explicit_large_a: Option<f64>,
    pub max_control: f64,
}

pub fn summarize_defects(rows: &[DefectRow]) -> DefectSummary {
    let random = rows.iter().filter(|r| r.kind == SampleKind::Random);
    let max_symplectic = random.clone().fold(0.0, |m: f64, r| m.max(r.symplectic));
    let max_explicit = random.clone().fold(0.0, |m: f64, r| m.max(r.explicit));
    let min_explicit_large_a = random
        .filter(|r| r.a.abs() >= 0.05)
        .map(|r| r.explicit)
        .reduce(f64::min);
    let max_control = rows
        .iter()
        .filter(|r| r.kind == SampleKind::Control)
        .fold(0.0, |m: f64, r| m.max(r.symplectic).max(r.explicit));
    DefectSummary {
        max_symplectic,
        max_explicit,
        min_explicit_large_a,
        max_control,
    }
}
