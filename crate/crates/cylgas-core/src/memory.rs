//! The precollision (memory) force `R_W(t) = r^R + r^L`.
//!
//! A particle incident on a face at time `t` with axial velocity `u` either
//! carries the fresh density `a0(u)` or, if the backward characteristic
//! touched the same face at an earlier time `tau` (`<W>_{tau,t} = u`), the
//! emission density of that earlier collision. The recursion
//!
//! ```text
//! a-(t; u) = pw * a+(tau; u) + (1 - pw) * a0(u)
//! a+(tau; u) = alpha a-(tau; 2 W(tau) - u)
//!              + (1-alpha) int_{incident side} k(u - W, u' - W) a-(tau; u') du'
//! ```
//!
//! is truncated at a configurable depth; the truncation error at depth `N`
//! scales like `(C gamma^{p+1})^N`. The perpendicular re-intersection
//! probability `pw` is the face-averaged weight of the geometric gate
//! `|v_perp| <= 2r/(t - tau)`, either as that plain bound (`PaperBound`) or
//! refined by the mean disc overlap (`ExactDisc`).
//!
//! The force integrals run over the only velocity windows where precollisions
//! exist: `u in [<W>_t, W(t)]` on the right face and
//! `u in [W(t), sup_s <W>_{s,t}]` on the left. Nodes are clustered at the
//! `u = W(t)` endpoint with a square-root grading because the weight
//! `ell(u - W) ~ |u - W|^p` vanishes there while the perpendicular weight
//! tends to one.

use crate::force::{ForceField, ForceModel};
use crate::kernel::PerpProfile;
use crate::motion::{Face, MotionGrid};
use crate::quad::{fixed_gk15, integrate, QuadError};
use core::fmt;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// How the perpendicular re-intersection probability is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerpMode {
    /// `cdf(2r/dt)`: the probability of the necessary condition
    /// `|v_perp| <= 2r/dt`.
    PaperBound,
    /// Face-averaged overlap of the emission and return discs; always inside
    /// `[0, cdf(2r/dt)]`.
    ExactDisc,
}

/// Truncation and quadrature parameters of the memory force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryConfig {
    /// Maximum number of precollisions traced backward (N >= 1).
    pub depth: u32,
    pub perp_mode: PerpMode,
    /// Nodes of the graded composite rule on each face window (>= 16).
    pub u_quad_points: u32,
    /// Relative tolerance of the embedded fresh-density integrals.
    pub rel_tol: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            depth: 2,
            perp_mode: PerpMode::ExactDisc,
            u_quad_points: 40,
            rel_tol: 1e-9,
        }
    }
}

impl MemoryConfig {
    fn validate(&self) -> Result<(), MemoryError> {
        if self.depth < 1 {
            return Err(MemoryError::BadConfig("depth must be >= 1"));
        }
        if self.u_quad_points < 16 {
            return Err(MemoryError::BadConfig("u_quad_points must be >= 16"));
        }
        if !(1e-14..=1e-2).contains(&self.rel_tol) {
            return Err(MemoryError::BadConfig("rel_tol outside (1e-14, 1e-2)"));
        }
        Ok(())
    }
}

/// First precollision of a face characteristic, with its geometric weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecollisionRecord {
    pub tau: f64,
    pub face: Face,
    pub u_x: f64,
    pub perp_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryError {
    Quad(QuadError),
    BadConfig(&'static str),
    /// Motion and model disagree on the initial velocity.
    Inconsistent { motion_v0: f64, model_v0: f64 },
    BadTime(f64),
}

impl fmt::Display for MemoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryError::Quad(e) => write!(f, "memory-force integral failed: {e}"),
            MemoryError::BadConfig(m) => write!(f, "invalid memory config: {m}"),
            MemoryError::Inconsistent {
                motion_v0,
                model_v0,
            } => write!(
                f,
                "motion starts at {motion_v0} but the model has V0 = {model_v0}"
            ),
            MemoryError::BadTime(t) => write!(f, "time {t} outside (0, T_max]"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MemoryError {}

impl From<QuadError> for MemoryError {
    fn from(e: QuadError) -> Self {
        MemoryError::Quad(e)
    }
}

/// Probability that a particle leaving a face returns to it after a flight
/// gap `dt`, as seen by the perpendicular profile.
pub fn perp_factor(profile: &PerpProfile, dt: f64, r: f64, mode: PerpMode) -> f64 {
    debug_assert!(r > 0.0);
    if dt <= 1e-300 {
        return 1.0;
    }
    let s_max = 2.0 * r / dt;
    match mode {
        PerpMode::PaperBound => profile.cdf(s_max),
        PerpMode::ExactDisc => {
            let overlap: fn(f64, f64) -> f64 = if profile.dim_perp() == 1 {
                // interval overlap over interval length
                |delta: f64, r: f64| (2.0 * r - delta).max(0.0) / (2.0 * r)
            } else {
                // lens area of two radius-r discs at center distance delta,
                // over the disc area
                |delta: f64, r: f64| {
                    if delta >= 2.0 * r {
                        return 0.0;
                    }
                    let half = 0.5 * delta / r;
                    let lens = 2.0 * r * r * half.acos()
                        - 0.5 * delta * (4.0 * r * r - delta * delta).sqrt();
                    lens / (core::f64::consts::PI * r * r)
                }
            };
            // cap the range at 9 sigma: beyond it the radial density carries
            // less than 1e-17 of the mass, and a huge (0, 2r/dt) interval
            // would hide the density spike from the quadrature panels
            let s_hi = s_max.min(9.0 * profile.sigma());
            fixed_gk15(
                |s| profile.radial_density(s) * overlap(s * dt, r),
                0.0,
                s_hi,
                6,
            )
            .clamp(0.0, 1.0)
        }
    }
}

/// Locates the first precollision for `(t, u)` and attaches the
/// perpendicular weight of its flight gap.
pub fn precollision_record(
    motion: &MotionGrid,
    t: f64,
    u: f64,
    model: &ForceModel,
    cfg: &MemoryConfig,
) -> Option<PrecollisionRecord> {
    let pc = motion.first_precollision(t, u)?;
    let pw = perp_factor(model.perp(), t - pc.s, model.radius(), cfg.perp_mode);
    Some(PrecollisionRecord {
        tau: pc.s,
        face: pc.face,
        u_x: u,
        perp_weight: pw,
    })
}

/// `a-(t; u) - a0(u)`: the excess of the incident density over the fresh one.
/// Zero when no precollision exists within the truncation depth.
fn excess_density(
    motion: &MotionGrid,
    t: f64,
    face: Face,
    u: f64,
    model: &ForceModel,
    cfg: &MemoryConfig,
    depth_left: u32,
) -> Result<f64, MemoryError> {
    if depth_left == 0 {
        return Ok(0.0);
    }
    let pc = match motion.first_precollision(t, u) {
        Some(pc) => pc,
        None => return Ok(0.0),
    };
    let tau = pc.s;
    if tau <= 0.0 {
        return Ok(0.0);
    }
    let pw = perp_factor(model.perp(), t - tau, model.radius(), cfg.perp_mode);
    if pw <= 0.0 {
        return Ok(0.0);
    }
    let w_tau = motion.value(tau);
    let alpha = model.alpha();
    let a0 = model.a0();
    let kernel = model.kernel();

    // specular pre-image, incident on the same face at time tau
    let u_spec = 2.0 * w_tau - u;
    let spec =
        a0.eval(u_spec) + excess_density(motion, tau, face, u_spec, model, cfg, depth_left - 1)?;

    // diffuse emission: fresh part over the whole incident side
    let x = u - w_tau;
    let fresh = fresh_emission(model, face, x, w_tau, cfg)?;

    // diffuse emission: correction over the precollision window at tau
    let mut corr = 0.0;
    if depth_left > 1 {
        let (lo, hi) = match face {
            Face::Right => (motion.running_average(tau), w_tau),
            Face::Left => (w_tau, motion.sup_window_average(tau)),
        };
        let width = hi - lo;
        if width > 1e-14 {
            let n_inner = (cfg.u_quad_points / 3).max(12);
            let h = width / n_inner as f64;
            for j in 0..n_inner {
                let up = lo + (j as f64 + 0.5) * h;
                let ex = excess_density(motion, tau, face, up, model, cfg, depth_left - 1)?;
                if ex != 0.0 {
                    corr += kernel.eval(x, up - w_tau) * ex * h;
                }
            }
        }
    }

    let a_plus = alpha * spec + (1.0 - alpha) * (fresh + corr);
    Ok(pw * (a_plus - a0.eval(u)))
}

/// `int_{incident side} k(x, u' - V) a0(u') du'`: the fresh-gas part of the
/// diffuse emission at relative outgoing speed `x` and wall velocity `V`.
/// Gaussian densities go through a fixed-panel rule on the `w = s/(1-s)`
/// transform (the integrand decays super-polynomially); slowly decaying
/// densities use the adaptive path.
fn fresh_emission(
    model: &ForceModel,
    face: Face,
    x: f64,
    v_wall: f64,
    cfg: &MemoryConfig,
) -> Result<f64, MemoryError> {
    let kernel = model.kernel();
    let a0 = model.a0();
    let sign = match face {
        Face::Right => -1.0,
        Face::Left => 1.0,
    };
    if matches!(a0.kind(), crate::kernel::DensityKind::Gaussian { .. }) {
        return Ok(fixed_gk15(
            |s| {
                let om = 1.0 - s;
                let w = sign * s / om;
                kernel.eval(x, w) * a0.eval(w + v_wall) / (om * om)
            },
            0.0,
            1.0,
            8,
        ));
    }
    let q = match face {
        Face::Right => integrate(
            |w| kernel.eval(x, w) * a0.eval(w + v_wall),
            f64::NEG_INFINITY,
            0.0,
            cfg.rel_tol,
        )?,
        Face::Left => integrate(
            |w| kernel.eval(x, w) * a0.eval(w + v_wall),
            0.0,
            f64::INFINITY,
            cfg.rel_tol,
        )?,
    };
    Ok(q.value)
}

/// Incident density `a-(t; u)` at the given face, traced through at most
/// `depth_left` precollisions. The base cases (`depth_left = 0`, or no
/// precollision) return `a0(u)`.
pub fn incoming_density(
    motion: &MotionGrid,
    t: f64,
    face: Face,
    u: f64,
    model: &ForceModel,
    cfg: &MemoryConfig,
    depth_left: u32,
) -> Result<f64, MemoryError> {
    Ok(model.a0().eval(u) + excess_density(motion, t, face, u, model, cfg, depth_left)?)
}

/// The memory force `R_W(t) = r^R(t) + r^L(t)`.
pub fn recollision_force(
    motion: &MotionGrid,
    t: f64,
    model: &ForceModel,
    cfg: &MemoryConfig,
) -> Result<f64, MemoryError> {
    cfg.validate()?;
    if !(t > 0.0 && t <= motion.t_max() * (1.0 + 1e-12)) {
        return Err(MemoryError::BadTime(t));
    }
    if (motion.v0() - model.v0()).abs() > 1e-9 * model.gamma().max(1.0) {
        return Err(MemoryError::Inconsistent {
            motion_v0: motion.v0(),
            model_v0: model.v0(),
        });
    }

    let w_t = motion.value(t);
    let mut total = 0.0;

    // right face: u in [<W>_t, W(t)], graded toward W(t)
    let lo_r = motion.running_average(t);
    total += face_window_integral(motion, t, Face::Right, lo_r, w_t, model, cfg)?;

    // left face: u in [W(t), sup_s <W>_{s,t}], graded toward W(t)
    let hi_l = motion.sup_window_average(t);
    total += face_window_integral(motion, t, Face::Left, w_t, hi_l, model, cfg)?;

    Ok(model.face_area() * total)
}

/// Graded composite rule for one face window. `W(t)` is always the endpoint
/// where `ell` vanishes; substituting `u = W -/+ width * xi^2` makes the
/// integrand smooth in `xi`.
fn face_window_integral(
    motion: &MotionGrid,
    t: f64,
    face: Face,
    lo: f64,
    hi: f64,
    model: &ForceModel,
    cfg: &MemoryConfig,
) -> Result<f64, MemoryError> {
    let width = hi - lo;
    if width <= 1e-14 {
        return Ok(0.0);
    }
    let w_t = motion.value(t);
    let n = cfg.u_quad_points;
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    for j in 0..n {
        let xi = (j as f64 + 0.5) * h;
        let u = match face {
            Face::Right => w_t - width * xi * xi,
            Face::Left => w_t + width * xi * xi,
        };
        let ex = excess_density(motion, t, face, u, model, cfg, cfg.depth)?;
        if ex == 0.0 {
            continue;
        }
        let ell = model.kernel().ell(model.alpha(), u - w_t)?;
        acc += ell * ex * 2.0 * width * xi * h;
    }
    Ok(acc)
}
