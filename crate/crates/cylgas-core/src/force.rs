//! The recollisionless (fictitious) drag `F0`, lateral force variants,
//! equilibrium velocity, and stiffness bounds.
//!
//! `F0(V)` is the force the body would feel if every incident particle
//! carried the initial density `a0`. Under the product form it reduces to a
//! single semi-infinite integral,
//!
//! ```text
//! F0(V) = F_S(V) + C * int_0^inf ell(w) [a0(V-w) - a0(V+w)] dw,
//! ```
//!
//! with `C` the face area and `ell` the momentum-transfer weight of the
//! kernel. Differences `F0(v2) - F0(v1)` are evaluated from the differenced
//! integrand rather than by subtracting two large values, which keeps the
//! quotient `Q = (F0(V_inf) - F0(W))/(V_inf - W)` accurate even when the
//! velocity gap is at the 1e-12 level.

use crate::kernel::{AxialKernel, InitialDensity, KernelError, PerpProfile};
use crate::quad::{integrate, QuadError};
use core::f64::consts::PI;
use core::fmt;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// Boundary condition on the lateral (side) surface.
///
/// `ZeroLateral` is the body-frame-independent law whose net horizontal force
/// vanishes. `MonotoneLateral` is the alternative law where the reflection
/// kernel is centered on the body velocity; its force is a nonnegative,
/// nondecreasing function of `V` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LateralVariant {
    ZeroLateral,
    MonotoneLateral,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForceError {
    Kernel(KernelError),
    Quad(QuadError),
    BadParam(&'static str),
    /// Geometric bracket for the equilibrium velocity grew past 2^40.
    BracketExhausted { e: f64 },
    /// `min F0' <= 0`; the kernel violates the monotone-drag hypotheses.
    NonPositiveStiffness { b0: f64 },
}

impl fmt::Display for ForceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForceError::Kernel(e) => write!(f, "{e}"),
            ForceError::Quad(e) => write!(f, "force integral failed: {e}"),
            ForceError::BadParam(m) => write!(f, "invalid force model parameter: {m}"),
            ForceError::BracketExhausted { e } => {
                write!(f, "no equilibrium bracket found for drive E = {e}")
            }
            ForceError::NonPositiveStiffness { b0 } => {
                write!(f, "non-positive stiffness bound B0 = {b0}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ForceError {}

impl From<QuadError> for ForceError {
    fn from(e: QuadError) -> Self {
        ForceError::Quad(e)
    }
}

impl From<KernelError> for ForceError {
    fn from(e: KernelError) -> Self {
        ForceError::Kernel(e)
    }
}

/// Anything that provides a drag law `F0` and its stable differences. The
/// kinetic [`ForceModel`] is the real implementation; tests substitute
/// synthetic laws.
pub trait ForceField {
    /// `F0(v)`, the recollisionless drag at body velocity `v`.
    fn f0(&self, v: f64) -> Result<f64, ForceError>;
    /// `F0(v2) - F0(v1)` computed without catastrophic cancellation.
    fn f0_diff(&self, v1: f64, v2: f64) -> Result<f64, ForceError>;
    fn v0(&self) -> f64;
    fn v_inf(&self) -> f64;
    /// Constant drive `E = F0(V_inf)`.
    fn drive(&self) -> f64;
    fn gamma(&self) -> f64 {
        self.v_inf() - self.v0()
    }
}

/// Full kinetic model of the driven cylinder.
#[derive(Debug, Clone)]
pub struct ForceModel {
    kernel: AxialKernel,
    perp: PerpProfile,
    a0: InitialDensity,
    alpha: f64,
    lateral: LateralVariant,
    d: u32,
    r: f64,
    face_area: f64,
    cyl_length: f64,
    lateral_slope: f64,
    e_drive: f64,
    v0: f64,
    v_inf: f64,
    gamma: f64,
    ell_decreasing: bool,
    /// End-face `dF0/dV` at the terminal velocity; the linearization anchor
    /// for gaps below the quadrature noise floor.
    df_end_at_vinf: f64,
}

/// Geometry and material inputs of a [`ForceModel`], before the velocity
/// scale is fixed.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub kernel: AxialKernel,
    pub perp: PerpProfile,
    pub a0: InitialDensity,
    pub alpha: f64,
    pub lateral: LateralVariant,
    pub d: u32,
    pub r: f64,
    pub cyl_length: f64,
}

impl ModelInputs {
    fn validate(&self) -> Result<(), ForceError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(ForceError::BadParam("alpha must lie in [0, 1)"));
        }
        if self.d != 2 && self.d != 3 {
            return Err(ForceError::BadParam("d must be 2 or 3"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(ForceError::BadParam("radius must be positive"));
        }
        if !(self.cyl_length > 0.0 && self.cyl_length.is_finite()) {
            return Err(ForceError::BadParam("cylinder length must be positive"));
        }
        if self.perp.dim_perp() != self.d - 1 {
            return Err(ForceError::BadParam("perp profile dimension must be d-1"));
        }
        Ok(())
    }

    fn face_area(&self) -> f64 {
        match self.d {
            2 => 2.0 * self.r,
            _ => PI * self.r * self.r,
        }
    }

    fn lateral_area(&self) -> f64 {
        match self.d {
            2 => 2.0 * self.cyl_length,
            _ => 2.0 * PI * self.r * self.cyl_length,
        }
    }

    fn lateral_slope(&self) -> f64 {
        match self.lateral {
            LateralVariant::ZeroLateral => 0.0,
            LateralVariant::MonotoneLateral => {
                self.lateral_area() * self.perp.inward_flux() * self.a0.mass()
            }
        }
    }

    /// End-face part of `F0(v)`.
    fn end_face_force(&self, v: f64) -> Result<f64, ForceError> {
        let kernel = &self.kernel;
        let alpha = self.alpha;
        let a0 = &self.a0;
        let integrand = |w: f64| {
            let ell = match kernel.ell(alpha, w) {
                Ok(l) => l,
                Err(_) => f64::NAN,
            };
            ell * (a0.eval(v - w) - a0.eval(v + w))
        };
        let r = integrate(integrand, 0.0, f64::INFINITY, 1e-10)?;
        Ok(self.face_area() * r.value)
    }

    /// `F0(v2) - F0(v1)` via the differenced integrand. The closed-form
    /// density differences carry only machine rounding, so the result keeps
    /// full relative accuracy down to gaps near 1e-9; below that callers
    /// switch to the analytic `a0'` linearization.
    fn end_face_diff(&self, v1: f64, v2: f64) -> Result<f64, ForceError> {
        if v1 == v2 {
            return Ok(0.0);
        }
        let gap = (v2 - v1).abs();
        let kernel = &self.kernel;
        let alpha = self.alpha;
        let a0 = &self.a0;
        let integrand = |w: f64| {
            let ell = match kernel.ell(alpha, w) {
                Ok(l) => l,
                Err(_) => f64::NAN,
            };
            let lo = a0.eval(v2 - w) - a0.eval(v1 - w);
            let hi = a0.eval(v2 + w) - a0.eval(v1 + w);
            ell * (lo - hi)
        };
        // The differenced integrand sits on a machine-noise floor of order
        // 1e-16 * a0_sup; accept the best estimate once the requested
        // relative tolerance is unreachable.
        let rel = (3e-16 / gap).clamp(1e-10, 1e-3);
        let r = match integrate(integrand, 0.0, f64::INFINITY, rel) {
            Ok(r) => r,
            Err(QuadError::NotConverged(best))
                if best.abs_error_estimate <= 1e-2 * best.value.abs() + 1e-300 =>
            {
                best
            }
            Err(e) => return Err(e.into()),
        };
        Ok(self.face_area() * r.value)
    }

    /// `d F0_end/dV` from the analytic density derivative.
    fn end_face_deriv(&self, v: f64) -> Result<f64, ForceError> {
        let kernel = &self.kernel;
        let alpha = self.alpha;
        let a0 = &self.a0;
        let integrand = |w: f64| {
            let ell = match kernel.ell(alpha, w) {
                Ok(l) => l,
                Err(_) => f64::NAN,
            };
            ell * (a0.deriv(v - w) - a0.deriv(v + w))
        };
        let r = integrate(integrand, 0.0, f64::INFINITY, 1e-9)?;
        Ok(self.face_area() * r.value)
    }

    /// True when `d ell/d w < 0` on a grid of negative `w`; the hypothesis
    /// under which `F0` is positive and increasing.
    fn check_ell_decreasing(&self) -> Result<bool, ForceError> {
        let h = 1e-6;
        for i in 0..40 {
            let w = -6.0 + 6.0 * (i as f64) / 40.0 - 1e-3;
            let d = (self.kernel.ell(self.alpha, w + h)? - self.kernel.ell(self.alpha, w - h)?)
                / (2.0 * h);
            if d >= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl ForceModel {
    /// Builds a model with prescribed terminal velocity; the drive is set to
    /// `E = F0(V_inf)` so the terminal balance holds by construction.
    pub fn with_v_inf(inputs: ModelInputs, v_inf: f64, gamma: f64) -> Result<Self, ForceError> {
        inputs.validate()?;
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(ForceError::BadParam("gamma must be nonnegative"));
        }
        if !v_inf.is_finite() {
            return Err(ForceError::BadParam("v_inf must be finite"));
        }
        let lateral_slope = inputs.lateral_slope();
        let e_drive = inputs.end_face_force(v_inf)? + lateral_slope * v_inf;
        let ell_decreasing = inputs.check_ell_decreasing()?;
        let df_end_at_vinf = inputs.end_face_deriv(v_inf)?;
        Ok(ForceModel {
            face_area: inputs.face_area(),
            lateral_slope,
            kernel: inputs.kernel,
            perp: inputs.perp,
            a0: inputs.a0,
            alpha: inputs.alpha,
            lateral: inputs.lateral,
            d: inputs.d,
            r: inputs.r,
            cyl_length: inputs.cyl_length,
            e_drive,
            v0: v_inf - gamma,
            v_inf,
            gamma,
            ell_decreasing,
            df_end_at_vinf,
        })
    }

    /// Builds a model from the drive `E >= 0`; the terminal velocity is the
    /// root of `F0(V_inf) = E`.
    pub fn with_drive(inputs: ModelInputs, e_drive: f64, gamma: f64) -> Result<Self, ForceError> {
        inputs.validate()?;
        let v_inf = equilibrium_velocity_raw(&inputs, e_drive)?;
        let mut model = ForceModel::with_v_inf(inputs, v_inf, gamma)?;
        // keep the user's E bit-exactly; the residual is below 1e-10*max(1,E)
        model.e_drive = e_drive;
        Ok(model)
    }

    pub fn kernel(&self) -> &AxialKernel {
        &self.kernel
    }
    pub fn perp(&self) -> &PerpProfile {
        &self.perp
    }
    pub fn a0(&self) -> &InitialDensity {
        &self.a0
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn lateral_variant(&self) -> LateralVariant {
        self.lateral
    }
    pub fn dim(&self) -> u32 {
        self.d
    }
    pub fn radius(&self) -> f64 {
        self.r
    }
    pub fn face_area(&self) -> f64 {
        self.face_area
    }
    pub fn cyl_length(&self) -> f64 {
        self.cyl_length
    }
    /// Whether `d ell/dw < 0` held on the construction grid.
    pub fn ell_decreasing(&self) -> bool {
        self.ell_decreasing
    }
    /// Exponent `p` of the kernel's second moment.
    pub fn p_exponent(&self) -> f64 {
        self.kernel.p_exponent()
    }

    /// Lateral contribution `F_S(v)`: identically zero for `ZeroLateral`,
    /// `G(v) = lateral_area * inward_flux * mass(a0) * v` for the monotone
    /// variant.
    pub fn lateral_force(&self, v: f64) -> f64 {
        self.lateral_slope * v
    }

    /// End-face part of the fictitious force; odd in `v` for even `a0`.
    pub fn end_face_force(&self, v: f64) -> Result<f64, ForceError> {
        self.raw().end_face_force(v)
    }

    fn raw(&self) -> ModelInputs {
        ModelInputs {
            kernel: self.kernel.clone(),
            perp: self.perp,
            a0: self.a0,
            alpha: self.alpha,
            lateral: self.lateral,
            d: self.d,
            r: self.r,
            cyl_length: self.cyl_length,
        }
    }
}

impl ForceField for ForceModel {
    fn f0(&self, v: f64) -> Result<f64, ForceError> {
        Ok(self.raw().end_face_force(v)? + self.lateral_force(v))
    }

    fn f0_diff(&self, v1: f64, v2: f64) -> Result<f64, ForceError> {
        if v1 == v2 {
            return Ok(0.0);
        }
        let gap = (v2 - v1).abs();
        let scale = v1.abs().max(v2.abs()).max(1.0);
        let end = if gap <= 1e-9 * scale {
            // below the quadrature noise floor: analytic linearization
            let mid = 0.5 * (v1 + v2);
            let d = if (mid - self.v_inf).abs() <= 1e-6 * scale {
                self.df_end_at_vinf
            } else {
                self.raw().end_face_deriv(mid)?
            };
            d * (v2 - v1)
        } else {
            self.raw().end_face_diff(v1, v2)?
        };
        Ok(end + self.lateral_slope * (v2 - v1))
    }

    fn v0(&self) -> f64 {
        self.v0
    }
    fn v_inf(&self) -> f64 {
        self.v_inf
    }
    fn drive(&self) -> f64 {
        self.e_drive
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Synthetic affine drag `F0(v) = slope * v`, for solver tests with a known
/// closed-form solution.
#[derive(Debug, Clone, Copy)]
pub struct LinearForce {
    pub slope: f64,
    pub v0: f64,
    pub v_inf: f64,
}

impl ForceField for LinearForce {
    fn f0(&self, v: f64) -> Result<f64, ForceError> {
        Ok(self.slope * v)
    }
    fn f0_diff(&self, v1: f64, v2: f64) -> Result<f64, ForceError> {
        Ok(self.slope * (v2 - v1))
    }
    fn v0(&self) -> f64 {
        self.v0
    }
    fn v_inf(&self) -> f64 {
        self.v_inf
    }
    fn drive(&self) -> f64 {
        self.slope * self.v_inf
    }
}

fn equilibrium_velocity_raw(inputs: &ModelInputs, e: f64) -> Result<f64, ForceError> {
    if !(e >= 0.0 && e.is_finite()) {
        return Err(ForceError::BadParam("drive E must be nonnegative"));
    }
    let slope = inputs.lateral_slope();
    let f0 = |v: f64| -> Result<f64, ForceError> { Ok(inputs.end_face_force(v)? + slope * v) };
    if e == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0f64;
    let mut grow = 0;
    while f0(hi)? < e {
        hi *= 2.0;
        grow += 1;
        if grow > 40 {
            return Err(ForceError::BracketExhausted { e });
        }
    }
    let mut lo = 0.0f64;
    let tol = 1e-10 * e.max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f0(mid)?;
        if (fm - e).abs() <= tol {
            return Ok(mid);
        }
        if fm < e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Terminal velocity for drive `e`: the root of `F0(V) = E`, bracketed
/// geometrically from `[0, 1]` and bisected to `1e-10 * max(1, E)`.
pub fn equilibrium_velocity(inputs: &ModelInputs, e: f64) -> Result<f64, ForceError> {
    inputs.validate()?;
    equilibrium_velocity_raw(inputs, e)
}

/// `B0 = min F0'`, `B_inf = max F0'` over a 101-point grid on `[V0, V_inf]`.
/// Derivatives use central differences of the stable force difference.
pub fn stiffness_bounds<F: ForceField + ?Sized>(field: &F) -> Result<(f64, f64), ForceError> {
    let v0 = field.v0();
    let v_inf = field.v_inf();
    if !(v0 < v_inf) {
        // degenerate window: derivative at the single point
        let h = 1e-5;
        let d = field.f0_diff(v_inf - h, v_inf + h)? / (2.0 * h);
        if d <= 0.0 {
            return Err(ForceError::NonPositiveStiffness { b0: d });
        }
        return Ok((d, d));
    }
    let gamma = v_inf - v0;
    let h = 1e-5 * gamma.max(1.0);
    let mut b0 = f64::INFINITY;
    let mut b_inf = f64::NEG_INFINITY;
    for i in 0..101 {
        let v = v0 + gamma * (i as f64) / 100.0;
        let d = field.f0_diff(v - h, v + h)? / (2.0 * h);
        b0 = b0.min(d);
        b_inf = b_inf.max(d);
    }
    if !(b0 > 0.0) {
        return Err(ForceError::NonPositiveStiffness { b0 });
    }
    Ok((b0, b_inf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{make_kernel, KernelFamily};

    fn gaussian_inputs(alpha: f64, lateral: LateralVariant) -> ModelInputs {
        ModelInputs {
            kernel: make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap(),
            perp: PerpProfile::gaussian(2, 1.0).unwrap(),
            a0: InitialDensity::gaussian(1.0, None).unwrap(),
            alpha,
            lateral,
            d: 3,
            r: 1.0,
            cyl_length: 2.0,
        }
    }

    /// Composite-Simpson oracle for the defining one-dimensional reduction,
    /// independent of the adaptive quadrature path.
    fn simpson_f0_oracle(inputs: &ModelInputs, v: f64) -> f64 {
        let n = 4000;
        let hi = 12.0;
        let h = hi / n as f64;
        let sqrt_pi = PI.sqrt();
        let ell = |w: f64| {
            // GaussFlux beta=1: m2(w) = (sqrt(pi)/2) |w|
            (1.0 + inputs.alpha) * w * w + (1.0 - inputs.alpha) * (sqrt_pi / 2.0) * w.abs()
        };
        let f = |w: f64| ell(w) * (inputs.a0.eval(v - w) - inputs.a0.eval(v + w));
        let mut s = f(0.0) + f(hi);
        for i in 1..n {
            let w = i as f64 * h;
            s += f(w) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        inputs.face_area() * s * h / 3.0
    }

    #[test]
    fn f0_zero_at_rest() {
        let model =
            ForceModel::with_v_inf(gaussian_inputs(0.5, LateralVariant::ZeroLateral), 1.0, 0.05)
                .unwrap();
        assert_eq!(model.f0(0.0).unwrap(), 0.0);
    }

    #[test]
    fn f0_matches_simpson_oracle() {
        let inputs = gaussian_inputs(0.0, LateralVariant::ZeroLateral);
        let model = ForceModel::with_v_inf(inputs.clone(), 1.0, 0.05).unwrap();
        let got = model.f0(0.5).unwrap();
        let want = simpson_f0_oracle(&inputs, 0.5);
        assert!(got > 0.0);
        assert!((got - want).abs() < 1e-7 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn f0_monotone_sample() {
        let model =
            ForceModel::with_v_inf(gaussian_inputs(0.0, LateralVariant::ZeroLateral), 1.0, 0.05)
                .unwrap();
        let f_half = model.f0(0.5).unwrap();
        let f_one = model.f0(1.0).unwrap();
        assert!(f_one > f_half && f_half > 0.0);
        assert!(model.ell_decreasing());
    }

    #[test]
    fn end_face_force_is_odd() {
        let model =
            ForceModel::with_v_inf(gaussian_inputs(0.3, LateralVariant::ZeroLateral), 1.0, 0.05)
                .unwrap();
        for v in [0.1, 0.5, 1.3] {
            let plus = model.end_face_force(v).unwrap();
            let minus = model.end_face_force(-v).unwrap();
            assert!((plus + minus).abs() < 1e-10 * plus.abs().max(1e-12));
        }
    }

    #[test]
    fn lateral_force_variants() {
        let zero =
            ForceModel::with_v_inf(gaussian_inputs(0.0, LateralVariant::ZeroLateral), 1.0, 0.05)
                .unwrap();
        assert_eq!(zero.lateral_force(0.7), 0.0);
        let mono = ForceModel::with_v_inf(
            gaussian_inputs(0.0, LateralVariant::MonotoneLateral),
            1.0,
            0.05,
        )
        .unwrap();
        assert_eq!(mono.lateral_force(0.0), 0.0);
        assert!(mono.lateral_force(0.5) >= mono.lateral_force(0.2));
        for v in [0.2, 0.5, 1.0] {
            assert!(mono.lateral_force(v) >= zero.lateral_force(v));
        }
    }

    #[test]
    fn equilibrium_roundtrip() {
        let inputs = gaussian_inputs(0.0, LateralVariant::ZeroLateral);
        assert_eq!(equilibrium_velocity(&inputs, 0.0).unwrap(), 0.0);
        let model = ForceModel::with_v_inf(inputs.clone(), 1.0, 0.05).unwrap();
        let e1 = model.f0(1.0).unwrap();
        let v = equilibrium_velocity(&inputs, e1).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "v = {v}");
        // partial drive lands strictly inside (0, 1), verified by the oracle
        let v7 = equilibrium_velocity(&inputs, 0.7 * e1).unwrap();
        assert!(v7 > 0.0 && v7 < 1.0);
        let back = simpson_f0_oracle(&inputs, v7);
        assert!((back - 0.7 * e1).abs() < 1e-6 * e1);
    }

    #[test]
    fn with_drive_sets_terminal_balance() {
        let inputs = gaussian_inputs(0.0, LateralVariant::ZeroLateral);
        let model = ForceModel::with_drive(inputs, 2.0, 0.05).unwrap();
        assert_eq!(model.drive(), 2.0);
        let res = model.f0(model.v_inf()).unwrap();
        assert!((res - 2.0).abs() < 1e-9);
        assert!((model.v_inf() - model.v0() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn stiffness_of_linear_force() {
        let lin = LinearForce {
            slope: 2.0,
            v0: 0.5,
            v_inf: 1.0,
        };
        let (b0, b_inf) = stiffness_bounds(&lin).unwrap();
        assert!((b0 - 2.0).abs() < 1e-9);
        assert!((b_inf - 2.0).abs() < 1e-9);
    }

    #[test]
    fn stiffness_positive_and_ordered() {
        let model =
            ForceModel::with_v_inf(gaussian_inputs(0.0, LateralVariant::ZeroLateral), 1.0, 0.05)
                .unwrap();
        let (b0, b_inf) = stiffness_bounds(&model).unwrap();
        assert!(b0 > 0.0 && b0 <= b_inf);
    }

    #[test]
    fn stiffness_window_shrinks_with_gamma() {
        let inputs = gaussian_inputs(0.0, LateralVariant::ZeroLateral);
        let wide = ForceModel::with_v_inf(inputs.clone(), 1.0, 1e-1).unwrap();
        let narrow = ForceModel::with_v_inf(inputs, 1.0, 1e-3).unwrap();
        let (b0w, biw) = stiffness_bounds(&wide).unwrap();
        let (b0n, bin_) = stiffness_bounds(&narrow).unwrap();
        assert!(bin_ - b0n < biw - b0w);
    }

    #[test]
    fn f0_diff_matches_direct_subtraction() {
        let model =
            ForceModel::with_v_inf(gaussian_inputs(0.2, LateralVariant::ZeroLateral), 1.0, 0.05)
                .unwrap();
        let direct = model.f0(1.0).unwrap() - model.f0(0.9).unwrap();
        let stable = model.f0_diff(0.9, 1.0).unwrap();
        assert!((direct - stable).abs() < 1e-8 * direct.abs());
        // tiny gaps stay finite and positive
        let tiny = model.f0_diff(1.0 - 1e-11, 1.0).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-9);
    }
}
