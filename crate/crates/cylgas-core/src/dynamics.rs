//! The iteration map `W -> V_W` and the fixed-point driver.
//!
//! Each candidate motion `W` induces a memory force `R_W(t)`; the induced
//! motion solves
//!
//! ```text
//! dV/dt = E - F0(V) - R_W(t),   V(0) = V0.
//! ```
//!
//! The solver integrates the gap `y = V_inf - V` instead of `V` itself,
//! `dy/dt = -(F0(V_inf) - F0(V_inf - y)) + R(t)`, using the cancellation-free
//! force difference; the far tail of `y` reaches the 1e-11 scale and would be
//! unrepresentable as a difference of O(1) velocities. Time stepping is
//! classical four-stage Runge-Kutta with step-doubling error control on each
//! grid cell.
//!
//! Iterating `W^{n+1} = V_{W^n}` from the recollisionless solution converges
//! geometrically (contraction factor of order `gamma^{p+1}`); the driver
//! stops at `sup |W^{n+1} - W^n| <= tol * gamma`.

use alloc::vec::Vec;

use crate::force::{stiffness_bounds, ForceError, ForceField, ForceModel};
use crate::kernel::{check_assumptions, AssumptionReport, CheckError};
use crate::memory::{recollision_force, MemoryConfig, MemoryError};
use crate::motion::{envelope_check, envelope_make, Envelope, MotionError, MotionGrid, Violation};
use core::fmt;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// Time grid of the solver: uniform step on the exponential transient, then
/// geometric stretching through the power-law tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub dt: f64,
    pub t_max: f64,
    pub stretch: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dt: 0.05,
            t_max: 200.0,
            stretch: 1.05,
        }
    }
}

/// Converged (or best-effort) output of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// The final velocity history `V(t)`.
    pub motion: MotionGrid,
    /// Memory force at each grid node of the final iterate.
    pub r_curve: Vec<f64>,
    pub iterations: u32,
    /// Sup-norm change per iteration; strictly positive until convergence.
    pub residual_history: Vec<f64>,
    /// Envelope with post-hoc fitted `A+`/`A-`; `None` when no admissible
    /// constants exist (e.g. a non-converged run).
    pub envelope: Option<Envelope>,
    /// Violations of the fitted envelope at grid nodes (empty on a clean
    /// converged run).
    pub envelope_violations: Vec<Violation>,
    pub converged: bool,
    pub b0: f64,
    pub b_inf: f64,
    pub t0: f64,
}

#[derive(Debug)]
pub enum SolveError {
    Force(ForceError),
    Memory(MemoryError),
    Motion(MotionError),
    Check(CheckError),
    /// The model failed its assumption certificate; the solver refuses to run.
    Assumptions(AssumptionReport),
    /// `t0 = log(B0/gamma^p)/(2 B_inf) <= 0`: gamma is not small enough for
    /// the envelope regime.
    NonPositiveT0 { t0: f64 },
    /// A grid cell could not reach the local error target.
    StepRejected { t: f64, err: f64 },
    BadParam(&'static str),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Force(e) => write!(f, "{e}"),
            SolveError::Memory(e) => write!(f, "{e}"),
            SolveError::Motion(e) => write!(f, "{e}"),
            SolveError::Check(e) => write!(f, "{e}"),
            SolveError::Assumptions(rep) => {
                write!(f, "assumption check failed: {:?}", rep.failing)
            }
            SolveError::NonPositiveT0 { t0 } => {
                write!(f, "recollisionless crossover t0 = {t0} is not positive")
            }
            SolveError::StepRejected { t, err } => {
                write!(f, "step rejected at t = {t} (error estimate {err})")
            }
            SolveError::BadParam(m) => write!(f, "invalid solver parameter: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolveError {}

impl From<ForceError> for SolveError {
    fn from(e: ForceError) -> Self {
        SolveError::Force(e)
    }
}
impl From<MemoryError> for SolveError {
    fn from(e: MemoryError) -> Self {
        SolveError::Memory(e)
    }
}
impl From<MotionError> for SolveError {
    fn from(e: MotionError) -> Self {
        SolveError::Motion(e)
    }
}
impl From<CheckError> for SolveError {
    fn from(e: CheckError) -> Self {
        SolveError::Check(e)
    }
}

/// One RK4 step of `y' = f(t, y)`.
fn rk4_step<F: Fn(f64, f64) -> Result<f64, ForceError>>(
    f: &F,
    t: f64,
    y: f64,
    h: f64,
) -> Result<f64, ForceError> {
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1)?;
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2)?;
    let k4 = f(t + h, y + h * k3)?;
    Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Advances one grid cell with step-doubling control, bisecting the cell
/// until the doubling estimate meets `tol`.
fn advance_cell<F: Fn(f64, f64) -> Result<f64, ForceError>>(
    f: &F,
    t: f64,
    y: f64,
    h: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, SolveError> {
    let full = rk4_step(f, t, y, h)?;
    let half = rk4_step(f, t, y, 0.5 * h)?;
    let two = rk4_step(f, t + 0.5 * h, half, 0.5 * h)?;
    let err = (two - full).abs() / 15.0;
    if err <= tol || h <= 1e-14 * (1.0 + t) {
        // accept the halved solution with its Richardson correction
        return Ok(two + (two - full) / 15.0);
    }
    if depth == 0 {
        return Err(SolveError::StepRejected { t, err });
    }
    let mid = advance_cell(f, t, y, 0.5 * h, 0.5 * tol, depth - 1)?;
    advance_cell(f, t + 0.5 * h, mid, 0.5 * h, 0.5 * tol, depth - 1)
}

/// Integrates `dV/dt = E - F0(V) - R(t)` over the given grid times and
/// returns the velocity history sampled on them. `r` is evaluated wherever
/// the stepper needs it (the fixed-point driver passes a linear interpolant
/// of the memory-force curve). Values are clamped to `V_inf + 1e-12`.
pub fn integrate_motion<FF, R>(field: &FF, r: R, times: &[f64]) -> Result<MotionGrid, SolveError>
where
    FF: ForceField + ?Sized,
    R: Fn(f64) -> f64,
{
    if times.len() < 2 || times[0] != 0.0 {
        return Err(SolveError::BadParam("grid must start at 0 with >= 2 nodes"));
    }
    let v_inf = field.v_inf();
    let gamma = field.gamma();
    // the gap spans many decades; control the error relative to the local
    // gap, capped by the absolute budget 1e-9 * gamma per cell
    let abs_cap = 1e-9 * gamma.max(1e-6);
    let floor = 1e-16 * gamma.max(1e-3);
    let rhs = |t: f64, y: f64| -> Result<f64, ForceError> {
        Ok(r(t) - field.f0_diff(v_inf - y, v_inf)?)
    };

    let mut y = gamma;
    let mut values = Vec::with_capacity(times.len());
    values.push(v_inf - y);
    for w in times.windows(2) {
        let h = w[1] - w[0];
        let tol = (1e-6 * y.abs()).max(floor).min(abs_cap);
        y = advance_cell(&rhs, w[0], y, h, tol, 30)?;
        if y < -1e-12 {
            y = -1e-12;
        }
        values.push(v_inf - y);
    }
    Ok(MotionGrid::new(times.to_vec(), values)?)
}

/// The quotient `Q(t) = (F0(V_inf) - F0(W(t)))/(V_inf - W(t))`, guarded by
/// the derivative at `V_inf` when the gap is below 1e-14.
pub fn quotient_q<FF: ForceField + ?Sized>(
    field: &FF,
    motion: &MotionGrid,
    t: f64,
) -> Result<f64, SolveError> {
    let w = motion.value(t);
    let y = field.v_inf() - w;
    if y < 1e-14 {
        let h = 1e-6 * field.gamma().max(1.0);
        return Ok(field.f0_diff(field.v_inf() - h, field.v_inf() + h)? / (2.0 * h));
    }
    Ok(field.f0_diff(w, field.v_inf())? / y)
}

/// Evaluates the memory-force curve on the grid; `R(0) = 0` since no
/// precollision can have happened at the initial time.
pub fn r_curve_sequential(
    model: &ForceModel,
    motion: &MotionGrid,
    cfg: &MemoryConfig,
    times: &[f64],
) -> Result<Vec<f64>, MemoryError> {
    times
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                Ok(0.0)
            } else {
                recollision_force(motion, t, model, cfg)
            }
        })
        .collect()
}

/// Fixed-point driver with a custom memory-force evaluator (the CLI crate
/// plugs in a parallel map here; results must not depend on the degree of
/// parallelism).
pub fn fixed_point_solve_with<E>(
    model: &ForceModel,
    mem_cfg: &MemoryConfig,
    grid_cfg: &GridConfig,
    tol: f64,
    max_iter: u32,
    eval_r: E,
) -> Result<SolveResult, SolveError>
where
    E: Fn(&ForceModel, &MotionGrid, &MemoryConfig, &[f64]) -> Result<Vec<f64>, MemoryError>,
{
    if !(tol > 0.0 && tol < 1.0) {
        return Err(SolveError::BadParam("tol must lie in (0, 1)"));
    }
    if max_iter == 0 {
        return Err(SolveError::BadParam("max_iter must be >= 1"));
    }
    let gamma = model.gamma();
    let v_inf = model.v_inf();

    // degenerate start: already at equilibrium
    if gamma == 0.0 {
        let times = MotionGrid::hybrid_times(grid_cfg.dt, grid_cfg.t_max, grid_cfg.stretch, 1.0)?;
        let n = times.len();
        let motion = MotionGrid::constant(times, v_inf)?;
        return Ok(SolveResult {
            motion,
            r_curve: alloc::vec![0.0; n],
            iterations: 1,
            residual_history: alloc::vec![0.0],
            envelope: None,
            envelope_violations: Vec::new(),
            converged: true,
            b0: 0.0,
            b_inf: 0.0,
            t0: 0.0,
        });
    }

    let report = check_assumptions(
        model.kernel(),
        model.a0(),
        model.alpha(),
        gamma,
        model.v0(),
        v_inf,
    )?;
    if !report.overall {
        return Err(SolveError::Assumptions(report));
    }

    let (b0, b_inf) = stiffness_bounds(model)?;
    let p = model.p_exponent();
    let t0 = (b0 / gamma.powf(p)).ln() / (2.0 * b_inf);
    if !(t0 > 0.0) {
        return Err(SolveError::NonPositiveT0 { t0 });
    }

    let times = MotionGrid::hybrid_times(grid_cfg.dt, grid_cfg.t_max, grid_cfg.stretch, t0)?;
    let mut motion = integrate_motion(model, |_| 0.0, &times)?;
    let mut r_curve = alloc::vec![0.0; times.len()];
    let mut residual_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        r_curve = eval_r(model, &motion, mem_cfg, &times)?;
        let r_grid = MotionGrid::new(times.clone(), r_curve.clone())?;
        let next = integrate_motion(model, |t| r_grid.value(t), &times)?;
        let residual = motion
            .values()
            .iter()
            .zip(next.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        residual_history.push(residual);
        motion = next;
        if residual <= tol * gamma {
            converged = true;
            break;
        }
    }

    // post-hoc envelope constants from the converged curve
    let m = model.dim() as f64 + p;
    let mut a_plus = 0.0f64;
    let mut a_minus = f64::INFINITY;
    for (&t, &v) in times.iter().zip(motion.values()) {
        let y = v_inf - v;
        let up = (y - gamma * (-b0 * t).exp()) * (1.0 + t).powf(m) / gamma.powf(p + 1.0);
        a_plus = a_plus.max(up);
        if t > 2.0 * t0 {
            let low = (y - gamma * (-b_inf * t).exp()) * t.powf(m) / gamma.powf(p + 1.0);
            a_minus = a_minus.min(low);
        }
    }
    let (envelope, envelope_violations) = if a_plus > 0.0 && a_minus > 0.0 && a_minus.is_finite() {
        let env = envelope_make(
            gamma,
            p,
            model.dim(),
            b0,
            b_inf,
            a_plus * (1.0 + 1e-9),
            a_minus * (1.0 - 1e-9),
        )?;
        let viol = envelope_check(&env, &motion, v_inf);
        (Some(env), viol)
    } else {
        (None, Vec::new())
    };

    Ok(SolveResult {
        motion,
        r_curve,
        iterations,
        residual_history,
        envelope,
        envelope_violations,
        converged,
        b0,
        b_inf,
        t0,
    })
}

/// Sequential fixed-point solve; see [`fixed_point_solve_with`].
pub fn fixed_point_solve(
    model: &ForceModel,
    mem_cfg: &MemoryConfig,
    grid_cfg: &GridConfig,
    tol: f64,
    max_iter: u32,
) -> Result<SolveResult, SolveError> {
    fixed_point_solve_with(model, mem_cfg, grid_cfg, tol, max_iter, |m, w, c, ts| {
        r_curve_sequential(m, w, c, ts)
    })
}
