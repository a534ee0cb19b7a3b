//! Float math that works on both `std` and `no_std` builds.
//!
//! With `std` enabled the inherent `f64` methods are used; without it the
//! same names are provided by an extension trait backed by `libm`. Modules
//! import the trait with `use crate::math::F64Ext as _;` so call sites look
//! identical either way. `erf` has no stable `std` counterpart and is always
//! routed through `libm`.

#[cfg(not(feature = "std"))]
pub trait F64Ext {
    fn abs(self) -> f64;
    fn sqrt(self) -> f64;
    fn exp(self) -> f64;
    fn exp_m1(self) -> f64;
    fn ln(self) -> f64;
    fn ln_1p(self) -> f64;
    fn log10(self) -> f64;
    fn powi(self, n: i32) -> f64;
    fn powf(self, e: f64) -> f64;
    fn cos(self) -> f64;
    fn sin(self) -> f64;
    fn acos(self) -> f64;
    fn floor(self) -> f64;
    fn ceil(self) -> f64;
    fn round(self) -> f64;
    fn hypot(self, other: f64) -> f64;
}

#[cfg(not(feature = "std"))]
impl F64Ext for f64 {
    fn abs(self) -> f64 {
        libm::fabs(self)
    }
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    fn exp_m1(self) -> f64 {
        libm::expm1(self)
    }
    fn ln(self) -> f64 {
        libm::log(self)
    }
    fn ln_1p(self) -> f64 {
        libm::log1p(self)
    }
    fn log10(self) -> f64 {
        libm::log10(self)
    }
    fn powi(self, n: i32) -> f64 {
        libm::pow(self, n as f64)
    }
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    fn acos(self) -> f64 {
        libm::acos(self)
    }
    fn floor(self) -> f64 {
        libm::floor(self)
    }
    fn ceil(self) -> f64 {
        libm::ceil(self)
    }
    fn round(self) -> f64 {
        libm::round(self)
    }
    fn hypot(self, other: f64) -> f64 {
        libm::hypot(self, other)
    }
}

/// Error function. Stable `std` has no `erf`, so this is `libm` on all builds.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Rounds to `sig` significant decimal digits. Used as a cache key so that
/// nearby quadrature abscissas hit the same memoized moment.
pub fn round_sig(x: f64, sig: i32) -> f64 {
    #[cfg(not(feature = "std"))]
    use F64Ext as _;
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(sig - 1 - mag);
    (x * scale).round() / scale
}

/// Ordinary least squares line through `(xs, ys)`.
///
/// Returns `(slope, intercept, rms_residual, stderr_slope)`. Requires at
/// least two points; the caller guarantees that.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    #[cfg(not(feature = "std"))]
    use F64Ext as _;
    debug_assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        ss_res += r * r;
    }
    let rms = (ss_res / n).sqrt();
    let stderr = if xs.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, rms, stderr)
}
