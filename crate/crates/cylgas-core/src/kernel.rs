//! Collision kernels at the cylinder ends, perpendicular profiles, initial
//! densities, and the assumption certifier.
//!
//! An axial kernel `k(v_x, u_x)` gives the emission density at outgoing axial
//! speed `v_x` for a particle incident at `u_x` (both relative to the wall).
//! Every kernel is flux normalized, `int_{v>=0} v k(v,u) dv = |u|`, so walls
//! neither create nor destroy mass, and is even in both arguments separately.
//! The built-in families:
//!
//! * `GaussFlux(beta)` - `2 beta e^{-beta v^2} |u|`; emitted speeds Maxwellian
//!   regardless of incidence, second-moment exponent `p = 1`.
//! * `NarrowGauss` - `2 e^{-v^2/|u|}`; grazing particles are barely deflected,
//!   `p = 3/2`.
//! * `PowerFamily(beta)` - `2 |u|^beta e^{-v^2 |u|^{beta-1}}` for
//!   `beta in [-1, 3]`, interpolating the two above with `p = (3-beta)/2`.
//! * `PolyDecay(n)` - `c |u| (1+v^2)^{-n/2}` with `n > 3`; no exponential
//!   decay required, `p = 1`.

use alloc::vec::Vec;

use crate::math::{erf, linear_fit, round_sig};
use crate::quad::{integrate, QuadError, QuadResult, DEFAULT_REL_TOL};
use core::f64::consts::PI;
use core::fmt;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// Built-in axial kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `k(v,u) = 2 beta e^{-beta v^2} |u|`, `beta > 0`.
    GaussFlux { beta: f64 },
    /// `k(v,u) = 2 e^{-v^2/|u|}`.
    NarrowGauss,
    /// `k(v,u) = 2 |u|^beta e^{-v^2 |u|^{beta-1}}`, `beta in [-1, 3]`.
    PowerFamily { beta: f64 },
    /// `k(v,u) = c |u| (1+v^2)^{-n/2}`, `n > 3`; `c` fixed numerically.
    PolyDecay { n: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    ParamOutOfRange(&'static str),
    Quad(QuadError),
    /// Flux normalization off by more than 1e-8 relative at the given `u`.
    FluxCheck { u: f64, flux: f64 },
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::ParamOutOfRange(m) => write!(f, "kernel parameter out of range: {m}"),
            KernelError::Quad(e) => write!(f, "kernel normalization integral failed: {e}"),
            KernelError::FluxCheck { u, flux } => {
                write!(f, "flux normalization violated at u={u}: got {flux}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for KernelError {}

impl From<QuadError> for KernelError {
    fn from(e: QuadError) -> Self {
        KernelError::Quad(e)
    }
}

#[cfg(feature = "std")]
mod cache {
    use std::collections::BTreeMap;
    use std::sync::RwLock;

    /// Memo table for the second moment, keyed by `u` rounded to 12
    /// significant digits. Safe for concurrent read/insert; recomputation
    /// races are benign because the value is a pure function of the key.
    #[derive(Debug, Default)]
    pub struct MomentCache(RwLock<BTreeMap<u64, f64>>);

    impl MomentCache {
        pub fn get(&self, key: u64) -> Option<f64> {
            self.0.read().ok().and_then(|m| m.get(&key).copied())
        }
        pub fn insert(&self, key: u64, value: f64) {
            if let Ok(mut m) = self.0.write() {
                m.insert(key, value);
            }
        }
    }
}

#[cfg(not(feature = "std"))]
mod cache {
    /// Cache disabled without `std`; every lookup recomputes.
    #[derive(Debug, Default)]
    pub struct MomentCache;

    impl MomentCache {
        pub fn get(&self, _key: u64) -> Option<f64> {
            None
        }
        pub fn insert(&self, _key: u64, _value: f64) {}
    }
}

/// A flux-normalized axial reflection kernel.
#[derive(Debug)]
pub struct AxialKernel {
    family: KernelFamily,
    norm_const: f64,
    p_exponent: f64,
    m2_cache: cache::MomentCache,
}

impl Clone for AxialKernel {
    fn clone(&self) -> Self {
        AxialKernel {
            family: self.family,
            norm_const: self.norm_const,
            p_exponent: self.p_exponent,
            m2_cache: Default::default(),
        }
    }
}

/// Builds a kernel, fixing its normalization constant and verifying the flux
/// identity on 20 log-spaced incidence speeds to 1e-8 relative.
pub fn make_kernel(family: KernelFamily) -> Result<AxialKernel, KernelError> {
    let (norm_const, p_exponent) = match family {
        KernelFamily::GaussFlux { beta } => {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(KernelError::ParamOutOfRange("GaussFlux requires beta > 0"));
            }
            // int_0^inf v e^{-beta v^2} dv = 1/(2 beta)
            (2.0 * beta, 1.0)
        }
        KernelFamily::NarrowGauss => (2.0, 1.5),
        KernelFamily::PowerFamily { beta } => {
            if !((-1.0..=3.0).contains(&beta)) {
                return Err(KernelError::ParamOutOfRange(
                    "PowerFamily requires beta in [-1, 3]",
                ));
            }
            (2.0, (3.0 - beta) / 2.0)
        }
        KernelFamily::PolyDecay { n } => {
            if !(n > 3.0 && n.is_finite()) {
                return Err(KernelError::ParamOutOfRange("PolyDecay requires n > 3"));
            }
            // shape fixed up to scale; the constant is computed numerically
            let shape = integrate(
                |v: f64| v * (1.0 + v * v).powf(-n / 2.0),
                0.0,
                f64::INFINITY,
                1e-12,
            )?;
            (1.0 / shape.value, 1.0)
        }
    };

    let kernel = AxialKernel {
        family,
        norm_const,
        p_exponent,
        m2_cache: Default::default(),
    };

    for i in 0..10 {
        // |u| from 1e-3 to 10, both signs
        let mag = 10f64.powf(-3.0 + 4.0 * (i as f64) / 9.0);
        for u in [mag, -mag] {
            let flux = integrate(|v| v * kernel.eval(v, u), 0.0, f64::INFINITY, 1e-10)?;
            if (flux.value - mag).abs() > 1e-8 * mag {
                return Err(KernelError::FluxCheck {
                    u,
                    flux: flux.value,
                });
            }
        }
    }
    Ok(kernel)
}

impl AxialKernel {
    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// The multiplicative normalization constant of the family.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Analytic low-speed exponent of the second outgoing moment,
    /// `m2(u) ~ |u|^p`.
    pub fn p_exponent(&self) -> f64 {
        self.p_exponent
    }

    /// `k(v, u)`; even in `v` and `u` by construction (only `v^2` and `|u|`
    /// enter).
    pub fn eval(&self, v: f64, u: f64) -> f64 {
        let ua = u.abs();
        match self.family {
            KernelFamily::GaussFlux { beta } => self.norm_const * ua * (-beta * v * v).exp(),
            KernelFamily::NarrowGauss => {
                if ua == 0.0 {
                    0.0
                } else {
                    self.norm_const * (-v * v / ua).exp()
                }
            }
            KernelFamily::PowerFamily { beta } => {
                if ua == 0.0 {
                    0.0
                } else {
                    self.norm_const * ua.powf(beta) * (-v * v * ua.powf(beta - 1.0)).exp()
                }
            }
            KernelFamily::PolyDecay { n } => self.norm_const * ua * (1.0 + v * v).powf(-n / 2.0),
        }
    }

    /// Second outgoing moment `m2(u) = int_{v>=0} v^2 k(v,u) dv`, memoized on
    /// `u` rounded to 12 significant digits.
    pub fn second_moment(&self, u: f64) -> Result<f64, QuadError> {
        let ua = round_sig(u.abs(), 12);
        if ua == 0.0 {
            return Ok(0.0);
        }
        let key = ua.to_bits();
        if let Some(v) = self.m2_cache.get(key) {
            return Ok(v);
        }
        let m2 = integrate(
            |v| v * v * self.eval(v, ua),
            0.0,
            f64::INFINITY,
            DEFAULT_REL_TOL,
        )?
        .value;
        self.m2_cache.insert(key, m2);
        Ok(m2)
    }

    /// Momentum-transfer weight `ell(w) = (1+alpha) w^2 + (1-alpha) m2(w)`.
    ///
    /// Even in `w`, positive away from zero, and `ell(0) = 0` for the
    /// built-in families.
    pub fn ell(&self, alpha: f64, w: f64) -> Result<f64, QuadError> {
        Ok((1.0 + alpha) * w * w + (1.0 - alpha) * self.second_moment(w)?)
    }

    /// Flux-weighted mean outgoing speed for incidence `u`:
    /// `int v * [v k(v,u)/|u|] dv = m2(u)/|u|`. Used for expected-impulse
    /// tallies in the Monte Carlo module.
    pub fn mean_outgoing_speed(&self, u: f64) -> Result<f64, QuadError> {
        let ua = u.abs();
        if ua == 0.0 {
            return Ok(0.0);
        }
        Ok(self.second_moment(u)? / ua)
    }
}

/// Isotropic Gaussian profile of the perpendicular velocity components in
/// `d-1` dimensions (`d` is the spatial dimension, 2 or 3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerpProfile {
    dim_perp: u32,
    sigma: f64,
}

impl PerpProfile {
    pub fn gaussian(dim_perp: u32, sigma: f64) -> Result<Self, KernelError> {
        if dim_perp == 0 || dim_perp > 2 {
            return Err(KernelError::ParamOutOfRange("dim_perp must be 1 or 2"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(KernelError::ParamOutOfRange("sigma must be positive"));
        }
        Ok(PerpProfile { dim_perp, sigma })
    }

    /// Unit-variance Gaussian in `d-1` dimensions.
    pub fn default_for_dim(d: u32) -> Result<Self, KernelError> {
        PerpProfile::gaussian(d.saturating_sub(1), 1.0)
    }

    pub fn dim_perp(&self) -> u32 {
        self.dim_perp
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Density of the radial speed `s = |u_perp|` after angular integration.
    pub fn radial_density(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        match self.dim_perp {
            1 => (2.0 / (PI * s2)).sqrt() * (-s * s / (2.0 * s2)).exp(),
            _ => s / s2 * (-s * s / (2.0 * s2)).exp(),
        }
    }

    /// CDF of the radial speed; Rayleigh for two perpendicular dimensions,
    /// half-normal for one.
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self.dim_perp {
            1 => erf(r / (self.sigma * core::f64::consts::SQRT_2)),
            _ => -((-r * r / (2.0 * self.sigma * self.sigma)).exp_m1()),
        }
    }

    /// Mean radial speed.
    pub fn mean_radial(&self) -> f64 {
        match self.dim_perp {
            1 => self.sigma * (2.0 / PI).sqrt(),
            _ => self.sigma * (PI / 2.0).sqrt(),
        }
    }

    /// Radial speed quantile (inverse CDF).
    pub fn radial_quantile(&self, q: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&q));
        match self.dim_perp {
            1 => {
                // bisection on erf
                let mut lo = 0.0;
                let mut hi = self.sigma * 12.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            _ => self.sigma * (-2.0 * (1.0 - q).ln()).sqrt(),
        }
    }

    /// Mean inward flux of the profile through a unit-area patch of the
    /// lateral surface, `int_{w.n >= 0} (w.n) b(w) dw`.
    pub fn inward_flux(&self) -> f64 {
        // sigma/sqrt(2 pi) for both one and two perpendicular dimensions
        self.sigma / (2.0 * PI).sqrt()
    }
}

/// Mass of the perpendicular profile inside radius `R`; the geometric gate of
/// the recollision condition `|v_perp| <= 2r/(t-s)`.
pub fn perp_tail_mass(profile: &PerpProfile, r: f64) -> f64 {
    profile.cdf(r)
}

/// Even, nonnegative, integrable axial density of the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDensity {
    kind: DensityKind,
    amplitude: f64,
    mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    /// `a0(v) = amplitude * e^{-beta v^2}`.
    Gaussian { beta: f64 },
    /// `a0(v) = amplitude * (1+v^2)^{-p/2}`, `p > 2`.
    Poly { p: f64 },
}

impl InitialDensity {
    /// Gaussian axial density. `amplitude = None` normalizes the axial mass
    /// to one (`sqrt(beta/pi)`).
    pub fn gaussian(beta: f64, amplitude: Option<f64>) -> Result<Self, KernelError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(KernelError::ParamOutOfRange("a0 requires beta > 0"));
        }
        let amplitude = amplitude.unwrap_or_else(|| (beta / PI).sqrt());
        if !(amplitude > 0.0) {
            return Err(KernelError::ParamOutOfRange("a0 amplitude must be > 0"));
        }
        let mass = amplitude * (PI / beta).sqrt();
        Ok(InitialDensity {
            kind: DensityKind::Gaussian { beta },
            amplitude,
            mass,
        })
    }

    /// Polynomially decaying axial density `amplitude * (1+v^2)^{-p/2}`.
    pub fn poly(p: f64, amplitude: f64) -> Result<Self, KernelError> {
        if !(p > 2.0 && p.is_finite()) {
            return Err(KernelError::ParamOutOfRange("poly a0 requires p > 2"));
        }
        if !(amplitude > 0.0) {
            return Err(KernelError::ParamOutOfRange("a0 amplitude must be > 0"));
        }
        let mass = amplitude
            * integrate(
                |v: f64| (1.0 + v * v).powf(-p / 2.0),
                f64::NEG_INFINITY,
                f64::INFINITY,
                1e-12,
            )
            .map_err(KernelError::Quad)?
            .value;
        Ok(InitialDensity {
            kind: DensityKind::Poly { p },
            amplitude,
            mass,
        })
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self.kind {
            DensityKind::Gaussian { beta } => self.amplitude * (-beta * v * v).exp(),
            DensityKind::Poly { p } => self.amplitude * (1.0 + v * v).powf(-p / 2.0),
        }
    }

    /// `a0'(v)`, closed form.
    pub fn deriv(&self, v: f64) -> f64 {
        match self.kind {
            DensityKind::Gaussian { beta } => {
                -2.0 * beta * v * self.amplitude * (-beta * v * v).exp()
            }
            DensityKind::Poly { p } => {
                -p * v * self.amplitude * (1.0 + v * v).powf(-p / 2.0 - 1.0)
            }
        }
    }

    /// Total axial mass `int a0 dv`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn sup_bound(&self) -> f64 {
        self.amplitude
    }

    /// Smallest `L` with `P(|v| <= L) >= q` under the normalized density.
    pub fn quantile_abs(&self, q: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&q));
        let half = 0.5 * self.mass;
        let target = q * half; // one-sided mass
        let mut lo = 0.0;
        let mut hi = 1.0;
        let one_sided = |l: f64| integrate(|v| self.eval(v), 0.0, l, 1e-10).map(|r| r.value);
        while one_sided(hi).unwrap_or(half) < target && hi < 1e9 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if one_sided(mid).unwrap_or(half) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Low-speed scaling fit of the second moment (assumption A3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A3Fit {
    pub p_fit: f64,
    pub c_low: f64,
    pub c_high: f64,
}

/// Which assumption a certificate check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    A1,
    A2,
    A3,
    A4,
    A5,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::A1 => "A1",
            Assumption::A2 => "A2",
            Assumption::A3 => "A3",
            Assumption::A4 => "A4",
            Assumption::A5 => "A5",
        };
        f.write_str(s)
    }
}

/// Numerical certificate for assumptions A1-A5.
///
/// Sup/inf are taken over finite grids (41 points per axis by default), so
/// the certificate is an under-approximation of the continuum statement;
/// margins should be read with that in mind.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub a1_product_form: bool,
    pub a2_sup: f64,
    pub a3: A3Fit,
    pub a4_sup: f64,
    /// `(1-alpha) inf int_{-inf}^{V0} k(v, u-eta) a0(u) du - a0(V_inf)`;
    /// positive means A5 holds on the grid with margin `delta = a5_margin`.
    pub a5_margin: f64,
    pub overall: bool,
    pub failing: Vec<Assumption>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckError {
    BadInput(&'static str),
    /// An assumption integral (typically A4) did not converge.
    Divergent(Assumption, QuadError),
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckError::BadInput(m) => write!(f, "invalid assumption-check input: {m}"),
            CheckError::Divergent(a, e) => write!(f, "divergent {a} integral: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CheckError {}

/// Grid resolution for the assumption sup/inf scans.
pub const ASSUMPTION_GRID: usize = 41;

/// Evaluates assumptions A1-A5 for a kernel and initial density at the given
/// mixing ratio `alpha` and velocity window `[v0, v_inf]`, `gamma = v_inf - v0`.
pub fn check_assumptions(
    kernel: &AxialKernel,
    a0: &InitialDensity,
    alpha: f64,
    gamma: f64,
    v0: f64,
    v_inf: f64,
) -> Result<AssumptionReport, CheckError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(CheckError::BadInput("alpha must lie in [0, 1)"));
    }
    if !(gamma > 0.0) || (v_inf - v0 - gamma).abs() > 1e-12 * gamma.max(1.0) {
        return Err(CheckError::BadInput("gamma must equal v_inf - v0 > 0"));
    }
    let n = ASSUMPTION_GRID;
    if n < 2 {
        return Err(CheckError::BadInput("empty assumption grid"));
    }
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64) / ((n - 1) as f64);

    // A1: product form is structural for the built-ins; verify the evenness
    // it implies on a sample.
    let mut a1 = true;
    for i in 0..9 {
        let v = -2.0 + 0.5 * i as f64;
        let u = 0.1 + 0.37 * i as f64;
        if kernel.eval(v, u) != kernel.eval(-v, u) || kernel.eval(v, u) != kernel.eval(v, -u) {
            a1 = false;
        }
        if a0.eval(v) != a0.eval(-v) {
            a1 = false;
        }
    }

    // A2: sup over |u| <= gamma, v in R of k. The v scan includes 0 where the
    // built-in families peak.
    let mut a2_sup = 0.0f64;
    for i in 0..n {
        let u = lin(-gamma, gamma, i);
        for j in 0..=n {
            let v = if j == n { 0.0 } else { lin(-gamma, 0.0, j) };
            a2_sup = a2_sup.max(kernel.eval(v, u));
        }
    }
    let a2_ok = a2_sup.is_finite();

    let a3 = fit_a3(kernel, gamma)?;
    let a3_ok = a3.c_low > 0.0 && a3.c_high.is_finite() && (-0.05..=2.05).contains(&a3.p_fit);

    // A4: sup over v in [-gamma, 0], eta in [V0, V_inf] of
    // int_{-inf}^{V_inf} k(v, u - eta) a0(u) du.
    // A5: same integrand, inf, integration up to V0, compared with a0(V_inf).
    let mut a4_sup = 0.0f64;
    let mut a5_inf = f64::INFINITY;
    for i in 0..n {
        let v = lin(-gamma, 0.0, i);
        for j in 0..n {
            let eta = lin(v0, v_inf, j);
            let k4 = integrate(
                |u| kernel.eval(v, u - eta) * a0.eval(u),
                f64::NEG_INFINITY,
                v_inf,
                DEFAULT_REL_TOL,
            )
            .map_err(|e| CheckError::Divergent(Assumption::A4, e))?;
            a4_sup = a4_sup.max(k4.value);
            let k5 = integrate(
                |u| kernel.eval(v, u - eta) * a0.eval(u),
                f64::NEG_INFINITY,
                v0,
                DEFAULT_REL_TOL,
            )
            .map_err(|e| CheckError::Divergent(Assumption::A5, e))?;
            a5_inf = a5_inf.min(k5.value);
        }
    }
    let a4_ok = a4_sup.is_finite();
    let a5_margin = (1.0 - alpha) * a5_inf - a0.eval(v_inf);
    let a5_ok = a5_margin > 0.0;

    let mut failing = Vec::new();
    if !a1 {
        failing.push(Assumption::A1);
    }
    if !a2_ok {
        failing.push(Assumption::A2);
    }
    if !a3_ok {
        failing.push(Assumption::A3);
    }
    if !a4_ok {
        failing.push(Assumption::A4);
    }
    if !a5_ok {
        failing.push(Assumption::A5);
    }

    Ok(AssumptionReport {
        a1_product_form: a1,
        a2_sup,
        a3,
        a4_sup,
        a5_margin,
        overall: failing.is_empty(),
        failing,
    })
}

/// Log-log regression of the second moment over `u in [-gamma, -gamma/100]`
/// plus the sandwich band of `m2(u)/|u|^p_fit` over the fixed window
/// `[-1, -1e-4]` (assumption A3 in isolation).
pub fn fit_a3(kernel: &AxialKernel, gamma: f64) -> Result<A3Fit, CheckError> {
    if !(gamma > 0.0) {
        return Err(CheckError::BadInput("gamma must be positive"));
    }
    let mut lx = Vec::with_capacity(25);
    let mut ly = Vec::with_capacity(25);
    for i in 0..25 {
        let mag = gamma * 0.01f64.powf(i as f64 / 24.0); // gamma down to gamma/100
        let m2 = kernel
            .second_moment(-mag)
            .map_err(|e| CheckError::Divergent(Assumption::A3, e))?;
        if m2 > 0.0 {
            lx.push(mag.ln());
            ly.push(m2.ln());
        }
    }
    if lx.len() < 3 {
        return Err(CheckError::BadInput("A3 fit has too few usable samples"));
    }
    let (p_fit, _, _, _) = linear_fit(&lx, &ly);
    let mut c_low = f64::INFINITY;
    let mut c_high = 0.0f64;
    for i in 0..25 {
        let mag = 1e-4f64 * 1e4f64.powf(i as f64 / 24.0); // 1e-4 up to 1
        let m2 = kernel
            .second_moment(-mag)
            .map_err(|e| CheckError::Divergent(Assumption::A3, e))?;
        let ratio = m2 / mag.powf(p_fit);
        c_low = c_low.min(ratio);
        c_high = c_high.max(ratio);
    }
    Ok(A3Fit {
        p_fit,
        c_low,
        c_high,
    })
}

/// Full-kernel normalization constant of the Gaussian family in `d`
/// dimensions, `C2 = 2 beta (beta/pi)^{(d-1)/2}`; the coefficient that makes
/// `C2 e^{-beta |v|^2} |u_x|` flux normalized before the axial/perpendicular
/// split.
pub fn gauss_full_norm_const(beta: f64, d: u32) -> f64 {
    2.0 * beta * (beta / PI).powf((d as f64 - 1.0) / 2.0)
}

/// The closed-form sufficient condition for A5 of the Gaussian family,
/// `beta < (1-alpha) C2 / 2` with `C2 = gauss_full_norm_const(beta, d)`.
pub fn gauss_beta_small_condition(beta: f64, alpha: f64, d: u32) -> bool {
    beta < 0.5 * (1.0 - alpha) * gauss_full_norm_const(beta, d)
}

#[allow(unused)]
fn quad_value(r: QuadResult) -> f64 {
    r.value
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_PI: f64 = 1.772_453_850_905_516;

    #[test]
    fn gauss_flux_norm_const_is_two_beta() {
        let k = make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap();
        assert_eq!(k.norm_const(), 2.0);
        assert_eq!(k.p_exponent(), 1.0);
        // k(v,u) = 2 e^{-v^2} |u|
        let v = 0.7;
        let got = k.eval(v, -3.0);
        let want = 2.0 * (-v * v as f64).exp() * 3.0;
        assert!((got - want).abs() < 1e-15 * want);
    }

    #[test]
    fn narrow_gauss_norm_const_is_two() {
        let k = make_kernel(KernelFamily::NarrowGauss).unwrap();
        assert_eq!(k.norm_const(), 2.0);
        assert_eq!(k.p_exponent(), 1.5);
    }

    #[test]
    fn power_family_reduces_to_known_cases() {
        let pf1 = make_kernel(KernelFamily::PowerFamily { beta: 1.0 }).unwrap();
        let gf = make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap();
        let pf0 = make_kernel(KernelFamily::PowerFamily { beta: 0.0 }).unwrap();
        let ng = make_kernel(KernelFamily::NarrowGauss).unwrap();
        for (v, u) in [(0.3, -0.6), (1.1, 0.2), (2.0, -4.0)] {
            assert!((pf1.eval(v, u) - gf.eval(v, u)).abs() < 1e-14 * gf.eval(v, u).max(1e-30));
            assert!((pf0.eval(v, u) - ng.eval(v, u)).abs() < 1e-14 * ng.eval(v, u).max(1e-30));
        }
        assert_eq!(pf1.p_exponent(), 1.0);
        assert_eq!(pf0.p_exponent(), 1.5);
    }

    #[test]
    fn poly_decay_constant_matches_closed_form() {
        // int_0^inf v (1+v^2)^{-n/2} dv = 1/(n-2)
        let k = make_kernel(KernelFamily::PolyDecay { n: 5.0 }).unwrap();
        assert!((k.norm_const() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_params() {
        assert!(make_kernel(KernelFamily::GaussFlux { beta: -1.0 }).is_err());
        assert!(make_kernel(KernelFamily::PowerFamily { beta: 3.5 }).is_err());
        assert!(make_kernel(KernelFamily::PolyDecay { n: 3.0 }).is_err());
    }

    #[test]
    fn second_moment_narrow_gauss() {
        // int_0^inf v^2 e^{-v^2/a} dv = (sqrt(pi)/4) a^{3/2}; kernel constant 2
        let k = make_kernel(KernelFamily::NarrowGauss).unwrap();
        let got = k.second_moment(-0.04).unwrap();
        let want = 2.0 * (SQRT_PI / 4.0) * 0.04f64.powf(1.5); // 0.007089815403622...
        assert!((got - want).abs() < 1e-9 * want, "got {got} want {want}");
    }

    #[test]
    fn second_moment_gauss_flux() {
        let k = make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap();
        let got = k.second_moment(-1.0).unwrap();
        let want = SQRT_PI / 2.0; // 0.8862269254527580
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn second_moment_even_in_u() {
        for fam in [
            KernelFamily::GaussFlux { beta: 0.7 },
            KernelFamily::NarrowGauss,
            KernelFamily::PowerFamily { beta: 2.2 },
            KernelFamily::PolyDecay { n: 6.0 },
        ] {
            let k = make_kernel(fam).unwrap();
            for u in [0.03, 0.4, 1.7] {
                assert_eq!(
                    k.second_moment(u).unwrap().to_bits(),
                    k.second_moment(-u).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn ell_values() {
        let k = make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap();
        for alpha in [0.0, 0.3, 0.8] {
            assert_eq!(k.ell(alpha, 0.0).unwrap(), 0.0);
        }
        let got = k.ell(0.0, -1.0).unwrap();
        let want = 1.0 + SQRT_PI / 2.0; // 1.8862269254527580
        assert!((got - want).abs() < 1e-9);
        let got = k.ell(0.5, -2.0).unwrap();
        let want = 1.5 * 4.0 + 0.5 * (SQRT_PI / 2.0) * 2.0; // 6.8862269254527580
        assert!((got - want).abs() < 1e-8);
    }

    #[test]
    fn perp_profile_rayleigh_cdf() {
        let b = PerpProfile::gaussian(2, 1.0).unwrap();
        assert_eq!(perp_tail_mass(&b, 0.0), 0.0);
        assert!((perp_tail_mass(&b, 1.0) - 0.393_469_340_287_366_6).abs() < 1e-12);
        assert!(perp_tail_mass(&b, 60.0) > 1.0 - 1e-12);
        // numeric cross-check against the radial density
        let num = integrate(|s| b.radial_density(s), 0.0, 1.0, 1e-11)
            .unwrap()
            .value;
        assert!((num - b.cdf(1.0)).abs() < 1e-9);
        // monotone
        assert!(b.cdf(0.5) < b.cdf(1.0));
    }

    #[test]
    fn perp_profile_normalized() {
        for dim in [1u32, 2] {
            let b = PerpProfile::gaussian(dim, 0.8).unwrap();
            let total = integrate(|s| b.radial_density(s), 0.0, f64::INFINITY, 1e-11)
                .unwrap()
                .value;
            assert!((total - 1.0).abs() < 1e-9, "dim {dim}: {total}");
            let mean = integrate(|s| s * b.radial_density(s), 0.0, f64::INFINITY, 1e-11)
                .unwrap()
                .value;
            assert!((mean - b.mean_radial()).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_density_normalization() {
        let a = InitialDensity::gaussian(1.0, None).unwrap();
        assert!((a.mass() - 1.0).abs() < 1e-12);
        assert!((a.eval(0.0) - 1.0 / SQRT_PI).abs() < 1e-12);
        assert_eq!(a.eval(0.7), a.eval(-0.7));
        let p = InitialDensity::poly(4.0, 1.0).unwrap();
        // int (1+v^2)^{-2} dv = pi/2
        assert!((p.mass() - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn quantile_abs_brackets_mass() {
        let a = InitialDensity::gaussian(1.0, None).unwrap();
        let q = a.quantile_abs(0.999_999);
        // N(0, 1/2): |v| quantile at 1-1e-6 is ~3.46
        assert!(q > 3.0 && q < 4.0, "q = {q}");
    }

    #[test]
    fn assumption_report_example_one() {
        // Gaussian kernel and density with matching beta, pure diffuse.
        let k = make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap();
        let a0 = InitialDensity::gaussian(1.0, None).unwrap();
        let rep = check_assumptions(&k, &a0, 0.0, 0.05, 0.95, 1.0).unwrap();
        assert!(rep.a1_product_form);
        assert!(rep.overall, "failing: {:?}", rep);
        assert!((rep.a3.p_fit - 1.0).abs() < 1e-3);
        assert!(rep.a5_margin > 0.0);
    }

    #[test]
    fn assumption_a5_fails_for_cold_slow_setup() {
        // beta = 10, alpha = 0, V_inf = 0.1 with a wide gap: the A5 inf drops
        // below a0(V_inf).
        let k = make_kernel(KernelFamily::GaussFlux { beta: 10.0 }).unwrap();
        let a0 = InitialDensity::gaussian(10.0, None).unwrap();
        let rep = check_assumptions(&k, &a0, 0.0, 0.2, -0.1, 0.1).unwrap();
        assert!(!rep.overall);
        assert!(rep.failing.contains(&Assumption::A5));
        assert!(rep.a5_margin < 0.0, "margin {}", rep.a5_margin);
    }

    #[test]
    fn narrow_gauss_a3_fit() {
        let k = make_kernel(KernelFamily::NarrowGauss).unwrap();
        let a0 = InitialDensity::gaussian(1.0, None).unwrap();
        let rep = check_assumptions(&k, &a0, 0.0, 0.05, 0.95, 1.0).unwrap();
        assert!((rep.a3.p_fit - 1.5).abs() < 1e-3, "p_fit {}", rep.a3.p_fit);
    }

    #[test]
    fn power_family_exponent_law() {
        // p = (3 - beta)/2, recovered by regression to +/- 1e-3
        for beta in [-1.0, 0.0, 1.0, 2.0, 3.0] {
            let k = make_kernel(KernelFamily::PowerFamily { beta }).unwrap();
            let fit = fit_a3(&k, 0.05).unwrap();
            let want = (3.0 - beta) / 2.0;
            assert!(
                (fit.p_fit - want).abs() < 1e-3,
                "beta {beta}: fit {} want {want}",
                fit.p_fit
            );
        }
    }
}
