//! Adaptive Gauss-Kronrod quadrature for the moment and force integrals.
//!
//! A 15-point Kronrod rule with embedded 7-point Gauss estimate is applied on
//! a worst-error-first interval queue. Semi-infinite ranges are mapped onto
//! (0,1) with the substitution `v = t/(1-t)`, which keeps Gaussian and
//! polynomially decaying tails well resolved without truncation heuristics.
//! Doubly infinite ranges split at zero. The subdivision order is fully
//! sequential, so equal inputs produce bit-identical results.

use alloc::collections::BinaryHeap;
use core::cell::Cell;
use core::cmp::Ordering;
use core::fmt;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// Outcome of a converged integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadError {
    /// Tolerance not reached within the subdivision budget. Carries the best
    /// estimate and its error bound.
    NotConverged(QuadResult),
    /// The integrand returned NaN; the abscissa is in the original variable.
    NanAt { x: f64 },
    /// `rel_tol` outside (1e-14, 1e-2).
    BadTolerance(f64),
    /// Lower bound not strictly below upper bound.
    BadRange { lo: f64, hi: f64 },
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadError::NotConverged(best) => write!(
                f,
                "quadrature did not converge: best estimate {} +/- {}",
                best.value, best.abs_error_estimate
            ),
            QuadError::NanAt { x } => write!(f, "integrand returned NaN at x = {x}"),
            QuadError::BadTolerance(t) => write!(f, "rel_tol {t} outside (1e-14, 1e-2)"),
            QuadError::BadRange { lo, hi } => write!(f, "invalid range ({lo}, {hi})"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QuadError {}

/// Default relative tolerance used when a caller does not override it.
/// Leaves two orders of magnitude headroom under the 1e-7 comparison
/// tolerances of the verification suites.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Maximum bisection depth per interval.
const MAX_DEPTH: u32 = 60;
/// Hard cap on interval splits; bounded work even for hostile integrands.
const MAX_SPLITS: u32 = 20_000;
/// Absolute floor below which the error target is considered met.
const ABS_FLOOR: f64 = 1e-300;

// 15-point Kronrod abscissas (positive half), 7-point Gauss weights, and
// Kronrod weights. Standard QUADPACK values.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

struct Gk15 {
    value: f64,
    err: f64,
}

/// One Gauss-Kronrod application on [a, b]. Error estimate follows the
/// QUADPACK rescaling of |K15 - G7|.
fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, evals: &mut u32) -> Gk15 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let f_center = f(center);
    let mut res_gauss = f_center * WG[3];
    let mut res_kronrod = f_center * WGK[7];
    let mut res_abs = res_kronrod.abs();

    let mut fv1 = [0.0f64; 8];
    let mut fv2 = [0.0f64; 8];
    fv1[7] = f_center;
    fv2[7] = f_center;

    for j in 0..3 {
        // even Kronrod indices coincide with Gauss nodes
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss += WG[j] * (f1 + f2);
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtw = 2 * j;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    *evals += 15;

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = res_kronrod * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_kronrod - res_gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        let scaled = (200.0 * err / res_asc).powf(1.5);
        err = res_asc * if scaled < 1.0 { scaled } else { 1.0 };
    }
    let round_off = 50.0 * f64::EPSILON * res_abs;
    if round_off > ABS_FLOOR {
        err = err.max(round_off);
    }
    Gk15 { value, err }
}

struct Interval {
    err: f64,
    seq: u64,
    a: f64,
    b: f64,
    value: f64,
    depth: u32,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal && self.seq == other.seq
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        // worst error first; earlier insertion wins ties to keep the pop
        // order (and hence the float summation order) reproducible
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Integrates `f` over `(lo, hi)` to relative tolerance `rel_tol`.
///
/// `lo`/`hi` may be `f64::NEG_INFINITY` / `f64::INFINITY`; semi-infinite
/// ranges are transformed with `v = t/(1-t)`, doubly infinite ranges split at
/// zero. Deterministic: identical inputs give bit-identical output.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    if !(1e-14..=1e-2).contains(&rel_tol) {
        return Err(QuadError::BadTolerance(rel_tol));
    }
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(QuadError::BadRange { lo, hi });
    }

    let nan_at: Cell<Option<f64>> = Cell::new(None);
    let guard = |x: f64, fx: f64| -> f64 {
        if fx.is_nan() && nan_at.get().is_none() {
            nan_at.set(Some(x));
        }
        fx
    };

    let run = |g: &dyn Fn(f64) -> f64, a: f64, b: f64| adaptive(g, a, b, rel_tol);

    let outcome = match (lo.is_infinite(), hi.is_infinite()) {
        (false, false) => run(&|x| guard(x, f(x)), lo, hi),
        (false, true) => {
            // v = lo + t/(1-t), dv = dt/(1-t)^2
            let g = |t: f64| {
                let om = 1.0 - t;
                let v = lo + t / om;
                guard(v, f(v)) / (om * om)
            };
            run(&g, 0.0, 1.0)
        }
        (true, false) => {
            // v = hi - t/(1-t)
            let g = |t: f64| {
                let om = 1.0 - t;
                let v = hi - t / om;
                guard(v, f(v)) / (om * om)
            };
            run(&g, 0.0, 1.0)
        }
        (true, true) => {
            let gp = |t: f64| {
                let om = 1.0 - t;
                let v = t / om;
                guard(v, f(v)) / (om * om)
            };
            let gn = |t: f64| {
                let om = 1.0 - t;
                let v = -t / om;
                guard(v, f(v)) / (om * om)
            };
            match (run(&gn, 0.0, 1.0), run(&gp, 0.0, 1.0)) {
                (Ok(n), Ok(p)) => Ok(combine(n, p)),
                (Err(QuadError::NotConverged(n)), Ok(p))
                | (Ok(n), Err(QuadError::NotConverged(p)))
                | (Err(QuadError::NotConverged(n)), Err(QuadError::NotConverged(p))) => {
                    Err(QuadError::NotConverged(combine(n, p)))
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        }
    };

    if let Some(x) = nan_at.get() {
        return Err(QuadError::NanAt { x });
    }
    outcome
}

/// Non-adaptive composite Kronrod rule on `panels` equal subdivisions of
/// `[a, b]`. For smooth integrands this is spectrally accurate and costs a
/// fixed `15 * panels` evaluations with no allocation; inner loops of the
/// memory force use it where the integrand shape is known.
pub fn fixed_gk15<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: u32) -> f64 {
    let mut evals = 0;
    let mut acc = 0.0;
    let h = (b - a) / panels as f64;
    for i in 0..panels {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        acc += gk15(&f, lo, hi, &mut evals).value;
    }
    acc
}

fn combine(a: QuadResult, b: QuadResult) -> QuadResult {
    QuadResult {
        value: a.value + b.value,
        abs_error_estimate: a.abs_error_estimate + b.abs_error_estimate,
        evaluations: a.evaluations + b.evaluations,
    }
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<QuadResult, QuadError> {
    let mut evals: u32 = 0;
    let first = gk15(f, a, b, &mut evals);
    let mut heap: BinaryHeap<Interval> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let mut total_value = first.value;
    let mut total_err = first.err;
    heap.push(Interval {
        err: first.err,
        seq,
        a,
        b,
        value: first.value,
        depth: 0,
    });

    let mut splits: u32 = 0;
    loop {
        let target = (rel_tol * total_value.abs()).max(ABS_FLOOR);
        if total_err <= target {
            break;
        }
        let worst = match heap.pop() {
            Some(w) => w,
            None => break,
        };
        if worst.depth >= MAX_DEPTH || splits >= MAX_SPLITS {
            heap.push(worst);
            return Err(QuadError::NotConverged(QuadResult {
                value: total_value,
                abs_error_estimate: total_err,
                evaluations: evals,
            }));
        }
        splits += 1;
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(f, worst.a, mid, &mut evals);
        let right = gk15(f, mid, worst.b, &mut evals);

        total_value += left.value + right.value - worst.value;
        total_err += left.err + right.err - worst.err;

        seq += 1;
        heap.push(Interval {
            err: left.err,
            seq,
            a: worst.a,
            b: mid,
            value: left.value,
            depth: worst.depth + 1,
        });
        seq += 1;
        heap.push(Interval {
            err: right.err,
            seq,
            a: mid,
            b: worst.b,
            value: right.value,
            depth: worst.depth + 1,
        });
    }

    // Re-sum in interval order for a tighter final value; the heap holds the
    // full partition of (a, b).
    let mut parts: alloc::vec::Vec<Interval> = heap.into_vec();
    parts.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = parts.iter().fold(0.0, |acc, p| acc + p.value);
    let err = parts.iter().fold(0.0, |acc, p| acc + p.err);
    Ok(QuadResult {
        value,
        abs_error_estimate: err,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_PI: f64 = 1.772_453_850_905_516;

    #[test]
    fn gaussian_half_line() {
        let r = integrate(|v: f64| (-v * v).exp(), 0.0, f64::INFINITY, 1e-10).unwrap();
        let exact = 0.5 * SQRT_PI; // 0.8862269254527580
        assert!((r.value - exact).abs() <= 1e-10 * exact, "value {}", r.value);
        assert!(r.evaluations >= 15);
    }

    #[test]
    fn linear_unit_interval() {
        let r = integrate(|v| v, 0.0, 1.0, 1e-10).unwrap();
        assert!((r.value - 0.5).abs() < 1e-14);
    }

    #[test]
    fn flux_moment_beta_two() {
        // int_0^inf v exp(-2 v^2) dv = 1/(2*2)
        let r = integrate(|v: f64| v * (-2.0 * v * v).exp(), 0.0, f64::INFINITY, 1e-10).unwrap();
        assert!((r.value - 0.25).abs() <= 1e-10 * 0.25);
    }

    #[test]
    fn full_line_gaussian() {
        let r = integrate(
            |v: f64| (-v * v).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-10,
        )
        .unwrap();
        assert!((r.value - SQRT_PI).abs() <= 1e-9 * SQRT_PI);
    }

    #[test]
    fn neg_half_line() {
        let r = integrate(
            |v: f64| (v).abs() * (-v * v).exp(),
            f64::NEG_INFINITY,
            0.0,
            1e-10,
        )
        .unwrap();
        assert!((r.value - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn deterministic_bitwise() {
        let f = |v: f64| (1.0 + v).ln() * (-0.3 * v * v).exp();
        let a = integrate(f, 0.0, f64::INFINITY, 1e-11).unwrap();
        let b = integrate(f, 0.0, f64::INFINITY, 1e-11).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn reports_nan_abscissa() {
        let err = integrate(
            |v: f64| if v > 2.0 { f64::NAN } else { v },
            0.0,
            4.0,
            1e-9,
        )
        .unwrap_err();
        match err {
            QuadError::NanAt { x } => assert!(x > 2.0 && x < 4.0),
            other => panic!("expected NanAt, got {other:?}"),
        }
    }

    #[test]
    fn divergent_integrand_errors() {
        let err = integrate(|v: f64| 1.0 / v, 0.0, 1.0, 1e-9).unwrap_err();
        match err {
            QuadError::NotConverged(best) => assert!(best.value > 10.0),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            integrate(|v| v, 0.0, 1.0, 0.5),
            Err(QuadError::BadTolerance(_))
        ));
        assert!(matches!(
            integrate(|v| v, 1.0, 0.0, 1e-9),
            Err(QuadError::BadRange { .. })
        ));
    }

    #[test]
    fn split_point_consistency() {
        // integral over (0, inf) equals (0, T) + (T, inf) for several T
        let f = |v: f64| (v * v + 0.3) * (-0.7 * v * v).exp();
        let whole = integrate(f, 0.0, f64::INFINITY, 1e-11).unwrap().value;
        for t in [0.17, 1.0, 3.7, 11.0] {
            let a = integrate(f, 0.0, t, 1e-11).unwrap().value;
            let b = integrate(f, t, f64::INFINITY, 1e-11).unwrap().value;
            assert!(
                (whole - (a + b)).abs() <= 1e-9 * whole.abs(),
                "split at {t}: {whole} vs {}",
                a + b
            );
        }
    }
}
