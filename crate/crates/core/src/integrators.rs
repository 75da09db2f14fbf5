//! One-step schemes and trajectory drivers.
//!
//! Two one-step maps are provided for
//! `dP = -sigma_0 dt - sum_r sigma_r dL^r`, `dQ = gamma_0 dt + sum_r gamma_r dL^r`:
//!
//! * [`symplectic_euler_step`]: implicit in `P`, explicit in `Q`, all
//!   coefficients evaluated at `(P_{j+1}, Q_j)`;
//! * [`explicit_euler_step`]: all coefficients at `(P_j, Q_j)`.
//!
//! Two drivers produce trajectories from a [`LevyPath`]:
//!
//! * [`integrate_fixed_grid`] feeds the raw increments `Delta L` of a uniform
//!   grid into a one-step map (the jump is linearized);
//! * [`integrate_pathwise`] steps the drift with symplectic Euler between jumps
//!   and applies the Marcus jump map at every jump time.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt17;
use crate::hamiltonian::{kubo_exact, HamiltonianSystem, KuboParams, PhaseState};
use crate::levy_path::{JumpEvent, LevyPath};
use crate::marcus_flow::{jump_flow, DEFAULT_JUMP_SUBSTEPS};

/// Any state component above this magnitude is treated as blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControls {
    /// Nominal step size.
    pub dt: f64,
    /// Max-norm tolerance on successive fixed-point iterates for the implicit `P` solve.
    pub implicit_tol: f64,
    pub implicit_max_iters: usize,
    /// Runge-Kutta substeps used by the jump map.
    pub jump_substeps: usize,
}

impl StepControls {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            implicit_tol: 1e-12,
            implicit_max_iters: 50,
            jump_substeps: DEFAULT_JUMP_SUBSTEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidSpec(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.implicit_tol.is_finite() && self.implicit_tol > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "implicit_tol must be positive, got {}",
                self.implicit_tol
            )));
        }
        if self.implicit_max_iters == 0 {
            return Err(Error::InvalidSpec("implicit_max_iters must be at least 1".into()));
        }
        if self.jump_substeps == 0 {
            return Err(Error::InvalidSpec("jump_substeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One-step map used by the fixed-grid driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Symplectic,
    Explicit,
}

impl Scheme {
    pub fn step(
        self,
        system: &HamiltonianSystem,
        state: &PhaseState,
        dt: f64,
        dl: &[f64],
        controls: &StepControls,
    ) -> Result<PhaseState> {
        match self {
            Scheme::Symplectic => symplectic_euler_step(system, state, dt, dl, controls),
            Scheme::Explicit => explicit_euler_step(system, state, dt, dl, controls),
        }
    }
}

/// Producer of a [`Trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeTag {
    Symplectic,
    Explicit,
    Pathwise,
    Exact,
}

impl From<Scheme> for SchemeTag {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Symplectic => SchemeTag::Symplectic,
            Scheme::Explicit => SchemeTag::Explicit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Right-continuous: at a jump time this holds the post-jump state.
    pub states: Vec<PhaseState>,
    pub scheme: SchemeTag,
    /// Fixed-grid runs: number of jumps (all channels) inside each step.
    pub jumps_per_step: Vec<usize>,
    /// Pathwise runs: `(jump time, pre-jump state)` for every applied jump.
    pub left_limits: Vec<(f64, PhaseState)>,
}

impl Trajectory {
    fn start(t0: f64, initial: PhaseState, scheme: SchemeTag) -> Self {
        Self {
            times: vec![t0],
            states: vec![initial],
            scheme,
            jumps_per_step: Vec::new(),
            left_limits: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &PhaseState)> {
        self.times.last().copied().zip(self.states.last())
    }

    /// Writes `t,p1..pn,q1..qn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(1, PhaseState::dim);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.extend((1..=n).map(|i| format!("q{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(*t)
                .chain(x.to_vec())
                .map(fmt17)
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_step_inputs(
    system: &HamiltonianSystem,
    state: &PhaseState,
    dt: f64,
    dl: &[f64],
) -> Result<()> {
    system.check_state(state)?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::Domain(format!("step size must be finite and >= 0, got {dt}")));
    }
    if dl.len() != system.noise_count() {
        return Err(Error::Domain(format!(
            "expected {} noise increments, got {}",
            system.noise_count(),
            dl.len()
        )));
    }
    if dl.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite noise increment".into()));
    }
    Ok(())
}

fn guard(state: PhaseState) -> Result<PhaseState> {
    if !state.is_finite() || state.max_abs() > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence(format!(
            "state component exceeded {DIVERGENCE_THRESHOLD:e} (max |x| = {:e})",
            state.max_abs()
        )));
    }
    Ok(state)
}

/// `sum_r c_r(p, q) w_r` over the drift (`w_0 = dt`) and noise terms.
fn weighted_sum(
    system: &HamiltonianSystem,
    p: &[f64],
    q: &[f64],
    dt: f64,
    dl: &[f64],
    coeff: fn(&HamiltonianSystem, usize, &[f64], &[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let mut acc: Vec<f64> = coeff(system, 0, p, q).into_iter().map(|c| c * dt).collect();
    for (r, &w) in dl.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (a, c) in acc.iter_mut().zip(coeff(system, r + 1, p, q)) {
            *a += c * w;
        }
    }
    acc
}

/// Semi-implicit (symplectic) Euler step.
///
/// Solves `P1 = P0 - sigma_0(P1, Q0) dt - sum_r sigma_r(P1, Q0) dL_r` by
/// fixed-point iteration started at `P0`, then sets
/// `Q1 = Q0 + gamma_0(P1, Q0) dt + sum_r gamma_r(P1, Q0) dL_r`.
pub fn symplectic_euler_step(
    system: &HamiltonianSystem,
    state: &PhaseState,
    dt: f64,
    dl: &[f64],
    controls: &StepControls,
) -> Result<PhaseState> {
    check_step_inputs(system, state, dt, dl)?;
    let q0 = &state.q;

    let mut p = state.p.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..controls.implicit_max_iters {
        let force = weighted_sum(system, &p, q0, dt, dl, HamiltonianSystem::sigma);
        let next: Vec<f64> = state.p.iter().zip(&force).map(|(p0, f)| p0 - f).collect();
        residual = next
            .iter()
            .zip(&p)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= controls.implicit_tol {
            let velocity = weighted_sum(system, &p, q0, dt, dl, HamiltonianSystem::gamma);
            let q = q0.iter().zip(&velocity).map(|(q0, v)| q0 + v).collect();
            return guard(PhaseState { p, q });
        }
    }
    if !residual.is_finite() {
        return Err(Error::Divergence("implicit momentum solve produced non-finite iterate".into()));
    }
    Err(Error::NonConvergence {
        iterations: controls.implicit_max_iters,
        residual,
    })
}

/// Explicit Euler step, every coefficient at `(P0, Q0)`.
pub fn explicit_euler_step(
    system: &HamiltonianSystem,
    state: &PhaseState,
    dt: f64,
    dl: &[f64],
    _controls: &StepControls,
) -> Result<PhaseState> {
    check_step_inputs(system, state, dt, dl)?;
    let force = weighted_sum(system, &state.p, &state.q, dt, dl, HamiltonianSystem::sigma);
    let velocity = weighted_sum(system, &state.p, &state.q, dt, dl, HamiltonianSystem::gamma);
    let p = state.p.iter().zip(&force).map(|(a, f)| a - f).collect();
    let q = state.q.iter().zip(&velocity).map(|(a, v)| a + v).collect();
    guard(PhaseState { p, q })
}

/// Nodes `t0 + j dt` up to `t_end`, with the last node exactly `t_end`.
///
/// A final node within `1e-9 dt` of `t_end` is snapped to it rather than
/// leaving a sliver step.
pub fn uniform_grid(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t0.is_finite() && t_end.is_finite() && t_end >= t0) {
        return Err(Error::Domain(format!("invalid time span [{t0}, {t_end}]")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut grid = vec![t0];
    let mut j = 1usize;
    loop {
        let t = t0 + j as f64 * dt;
        if t >= t_end - 1e-9 * dt {
            break;
        }
        grid.push(t);
        j += 1;
    }
    if t_end > t0 {
        grid.push(t_end);
    }
    Ok(grid)
}

fn check_span(path: &LevyPath, t0: f64, t_end: f64) -> Result<()> {
    if !(t0.is_finite() && t_end.is_finite() && t0 >= 0.0 && t_end >= t0) {
        return Err(Error::Domain(format!("invalid time span [{t0}, {t_end}]")));
    }
    if t_end > path.horizon() {
        return Err(Error::Domain(format!(
            "end time {t_end} exceeds path horizon {}",
            path.horizon()
        )));
    }
    Ok(())
}

fn check_channels(system: &HamiltonianSystem, path: &LevyPath) -> Result<()> {
    if system.noise_count() != path.noise_count() {
        return Err(Error::Domain(format!(
            "system has {} noise channels but path has {}",
            system.noise_count(),
            path.noise_count()
        )));
    }
    Ok(())
}

/// Fixed-grid run that keeps whatever was computed before a failure.
///
/// Returns the (possibly truncated) trajectory and the step error, if any.
pub fn integrate_fixed_grid_partial(
    system: &HamiltonianSystem,
    scheme: Scheme,
    initial: &PhaseState,
    t0: f64,
    t_end: f64,
    path: &LevyPath,
    controls: &StepControls,
) -> Result<(Trajectory, Option<Error>)> {
    controls.validate()?;
    system.check_state(initial)?;
    check_channels(system, path)?;
    check_span(path, t0, t_end)?;

    let grid = uniform_grid(t0, t_end, controls.dt)?;
    let mut traj = Trajectory::start(t0, initial.clone(), scheme.into());
    if grid.len() < 2 {
        return Ok((traj, None));
    }

    let increments: Vec<Vec<f64>> = (1..=system.noise_count())
        .map(|r| path.grid_increments(r, &grid))
        .collect::<Result<_>>()?;
    traj.jumps_per_step = jump_counts(path.jumps_in(grid[0], grid[grid.len() - 1])?, &grid);

    let mut state = initial.clone();
    let mut dl = vec![0.0; system.noise_count()];
    for j in 0..grid.len() - 1 {
        for (r, inc) in increments.iter().enumerate() {
            dl[r] = inc[j];
        }
        let dt = grid[j + 1] - grid[j];
        match scheme.step(system, &state, dt, &dl, controls) {
            Ok(next) => state = next,
            Err(e) => {
                let err = Error::Step {
                    index: j,
                    time: grid[j],
                    source: Box::new(e),
                };
                return Ok((traj, Some(err)));
            }
        }
        traj.times.push(grid[j + 1]);
        traj.states.push(state.clone());
    }
    Ok((traj, None))
}

fn jump_counts(events: &[JumpEvent], grid: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; grid.len() - 1];
    let mut j = 0;
    for ev in events {
        while ev.time > grid[j + 1] {
            j += 1;
        }
        counts[j] += 1;
    }
    counts
}

/// Uniform-grid integration with raw noise increments.
pub fn integrate_fixed_grid(
    system: &HamiltonianSystem,
    scheme: Scheme,
    initial: &PhaseState,
    t0: f64,
    t_end: f64,
    path: &LevyPath,
    controls: &StepControls,
) -> Result<Trajectory> {
    match integrate_fixed_grid_partial(system, scheme, initial, t0, t_end, path, controls)? {
        (traj, None) => Ok(traj),
        (_, Some(err)) => Err(err),
    }
}

/// Jump-adapted integration.
///
/// Between jumps the drift ODE is advanced with symplectic Euler steps of size
/// `controls.dt`, the last step of each interval shortened to land on the jump
/// time. At each jump time the Marcus jump map is applied; simultaneous jumps on
/// different channels are applied together.
pub fn integrate_pathwise(
    system: &HamiltonianSystem,
    initial: &PhaseState,
    t0: f64,
    t_end: f64,
    path: &LevyPath,
    controls: &StepControls,
) -> Result<Trajectory> {
    controls.validate()?;
    system.check_state(initial)?;
    check_channels(system, path)?;
    check_span(path, t0, t_end)?;

    let mut traj = Trajectory::start(t0, initial.clone(), SchemeTag::Pathwise);
    if t_end == t0 {
        return Ok(traj);
    }
    let m = system.noise_count();
    let zeros = vec![0.0; m];
    let mut state = initial.clone();
    let mut segment_start = t0;
    let mut step_index = 0usize;

    let drift_to = |target: f64,
                        from: f64,
                        state: &mut PhaseState,
                        traj: &mut Trajectory,
                        step_index: &mut usize|
     -> Result<()> {
        for t in uniform_grid(from, target, controls.dt)?.windows(2) {
            *state = symplectic_euler_step(system, state, t[1] - t[0], &zeros, controls).map_err(
                |e| Error::Step {
                    index: *step_index,
                    time: t[0],
                    source: Box::new(e),
                },
            )?;
            *step_index += 1;
            traj.times.push(t[1]);
            traj.states.push(state.clone());
        }
        Ok(())
    };

    let events = path.jumps_in(t0, t_end)?;
    let mut i = 0;
    while i < events.len() {
        let tau = events[i].time;
        let mut marks = vec![0.0; m];
        while i < events.len() && events[i].time == tau {
            marks[events[i].channel - 1] += events[i].mark;
            i += 1;
        }

        drift_to(tau, segment_start, &mut state, &mut traj, &mut step_index)?;
        let pre = state.clone();
        state = jump_flow(system, &state, &marks, controls.jump_substeps)
            .and_then(guard)
            .map_err(|e| Error::Step {
                index: step_index,
                time: tau,
                source: Box::new(e),
            })?;
        traj.left_limits.push((tau, pre));
        *traj.states.last_mut().expect("trajectory is never empty") = state.clone();
        segment_start = tau;
    }
    drift_to(t_end, segment_start, &mut state, &mut traj, &mut step_index)?;
    Ok(traj)
}

/// Exact Kubo solution sampled at `times`, driven by channel 1 of `path`.
///
/// The state at `times[j]` is `initial` rotated by
/// `alpha (t_j - t_0) + beta (L(t_j) - L(t_0))`, where `t_0 = times[0]`.
pub fn kubo_exact_trajectory(
    params: KuboParams,
    initial: &PhaseState,
    times: &[f64],
    path: &LevyPath,
) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::Domain("no sample times".into()));
    }
    let t0 = times[0];
    let increments = if times.len() > 1 {
        path.grid_increments(1, times)?
    } else {
        Vec::new()
    };
    let mut traj = Trajectory::start(t0, kubo_exact(params, initial, 0.0, 0.0)?, SchemeTag::Exact);
    let mut l = 0.0;
    for (t, dl) in times[1..].iter().zip(increments) {
        l += dl;
        traj.times.push(*t);
        traj.states.push(kubo_exact(params, initial, t - t0, l)?);
    }
    Ok(traj)
}
