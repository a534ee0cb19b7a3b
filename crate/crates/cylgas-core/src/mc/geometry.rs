//! Body path representation and hit-time solvers.
//!
//! The body center follows piecewise segments `x(t) = x0 + v dt + a dt^2/2`:
//! prescribed motions use linear segments whose node positions integrate the
//! velocity history exactly, self-consistent runs use quadratic segments
//! (constant drive between collision kicks). A particle's radial approach is
//! a parabola in time, so the set of times with `|rho(t)| <= r` is a single
//! interval; face hits are searched only inside it.

use alloc::vec::Vec;

use crate::motion::{Face, MotionGrid};

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub t0: f64,
    pub x0: f64,
    pub v: f64,
    pub a: f64,
}

impl Segment {
    fn x(&self, t: f64) -> f64 {
        let dt = t - self.t0;
        self.x0 + (self.v + 0.5 * self.a * dt) * dt
    }
    fn vel(&self, t: f64) -> f64 {
        self.v + self.a * (t - self.t0)
    }
}

/// Piecewise body-center path; the last segment extends to infinity.
#[derive(Debug, Clone)]
pub struct BodyPath {
    segs: Vec<Segment>,
}

impl BodyPath {
    /// Prescribed path: linear segments with exact node positions (segment
    /// velocity is the window average of `W` over the cell).
    pub fn from_motion(motion: &MotionGrid, x_start: f64) -> Self {
        let times = motion.times();
        let mut segs = Vec::with_capacity(times.len());
        let mut x = x_start;
        for k in 0..times.len() - 1 {
            let dt = times[k + 1] - times[k];
            let v = motion.window_average(times[k], times[k + 1]).unwrap();
            segs.push(Segment {
                t0: times[k],
                x0: x,
                v,
                a: 0.0,
            });
            x += v * dt;
        }
        let t_end = *times.last().unwrap();
        let v_last = *motion.values().last().unwrap();
        segs.push(Segment {
            t0: t_end,
            x0: x,
            v: v_last,
            a: 0.0,
        });
        BodyPath { segs }
    }

    /// Dynamic path for the self-consistent run: starts with one open
    /// segment.
    pub fn dynamic(x_start: f64, v_start: f64, accel: f64) -> Self {
        BodyPath {
            segs: alloc::vec![Segment {
                t0: 0.0,
                x0: x_start,
                v: v_start,
                a: accel,
            }],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segs
    }

    fn seg_index(&self, t: f64) -> usize {
        match self
            .segs
            .binary_search_by(|s| s.t0.total_cmp(&t))
        {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    pub fn x(&self, t: f64) -> f64 {
        self.segs[self.seg_index(t)].x(t)
    }

    pub fn v(&self, t: f64) -> f64 {
        self.segs[self.seg_index(t)].vel(t)
    }

    pub fn last_time(&self) -> f64 {
        self.segs.last().unwrap().t0
    }

    /// Applies a velocity kick at time `t`: closes the open segment and
    /// starts a new one with the same drive.
    pub fn kick(&mut self, t: f64, dv: f64) {
        let x = self.x(t);
        let v = self.v(t) + dv;
        let a = self.segs.last().unwrap().a;
        self.segs.push(Segment { t0: t, x0: x, v, a });
    }
}

/// Time interval during which `|rho + uperp (t - t_now)| <= r`; `None` when
/// the perpendicular line misses the tube entirely.
pub fn radial_window(rho: [f64; 2], uperp: [f64; 2], t_now: f64, r: f64) -> Option<(f64, f64)> {
    let c2 = uperp[0] * uperp[0] + uperp[1] * uperp[1];
    let c1 = 2.0 * (rho[0] * uperp[0] + rho[1] * uperp[1]);
    let c0 = rho[0] * rho[0] + rho[1] * rho[1] - r * r;
    if c2 < 1e-300 {
        return if c0 <= 0.0 {
            Some((t_now, f64::INFINITY))
        } else {
            None
        };
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let dt1 = (-c1 - sq) / (2.0 * c2);
    let dt2 = (-c1 + sq) / (2.0 * c2);
    if dt2 <= 0.0 {
        return None;
    }
    Some((t_now + dt1.max(0.0), t_now + dt2))
}

/// A face crossing: time, body velocity there, and the face.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub t: f64,
    pub v_body: f64,
    pub face: Face,
}

/// Earliest crossing of the particle line with a face plane inside
/// `(after, until]`, regardless of incidence side. `offset` is the signed
/// face offset from the body center.
pub fn face_crossing(
    path: &BodyPath,
    offset: f64,
    face: Face,
    t_p: f64,
    x_p: f64,
    vx: f64,
    after: f64,
    until: f64,
) -> Option<Crossing> {
    if !(until > after) {
        return None;
    }
    let segs = path.segments();
    let mut k = path.seg_index(after);
    while k < segs.len() {
        let seg = segs[k];
        let seg_end = if k + 1 < segs.len() {
            segs[k + 1].t0
        } else {
            f64::INFINITY
        };
        if seg.t0 > until {
            break;
        }
        let lo = seg.t0.max(after);
        let hi = seg_end.min(until);
        if hi > lo {
            // rel(t) = particle - face is quadratic on the segment; split at
            // the vertex into monotone halves and bisect each
            let rel = |t: f64| x_p + vx * (t - t_p) - (seg.x(t) + offset);
            let drel = |t: f64| vx - seg.vel(t);
            let mut pieces: [(f64, f64); 2] = [(lo, hi), (f64::NAN, f64::NAN)];
            if seg.a != 0.0 {
                let t_vertex = seg.t0 + (vx - seg.v) / seg.a;
                if t_vertex > lo && t_vertex < hi {
                    pieces = [(lo, t_vertex), (t_vertex, hi)];
                }
            }
            for &(a, b) in pieces.iter() {
                if a.is_nan() || !(b > a) {
                    continue;
                }
                if let Some(t_hit) = monotone_root(&rel, a, b) {
                    let _ = drel;
                    return Some(Crossing {
                        t: t_hit,
                        v_body: seg.vel(t_hit),
                        face,
                    });
                }
            }
        }
        k += 1;
    }
    None
}

/// Root of a monotone function on `[a, b]` by bisection with a secant
/// refinement; `None` if no sign change.
fn monotone_root<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Option<f64> {
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fa * fb > 0.0 {
        return None;
    }
    let (mut lo, mut hi, mut flo) = (a, b, fa);
    for _ in 0..80 {
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm * flo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    // one secant polish inside the bracket
    let fhi = f(hi);
    let t = if (fhi - flo).abs() > 0.0 {
        let s = lo - flo * (hi - lo) / (fhi - flo);
        if s > lo && s < hi {
            s
        } else {
            0.5 * (lo + hi)
        }
    } else {
        0.5 * (lo + hi)
    };
    Some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn radial_window_basics() {
        // heading straight at the axis from distance 2, speed 1, r = 0.5
        let w = radial_window([2.0, 0.0], [-1.0, 0.0], 0.0, 0.5).unwrap();
        assert!((w.0 - 1.5).abs() < 1e-12);
        assert!((w.1 - 2.5).abs() < 1e-12);
        // missing the tube
        assert!(radial_window([2.0, 1.0], [0.0, 1.0], 0.0, 0.5).is_none());
        // already inside, zero perp velocity
        let w = radial_window([0.1, 0.0], [0.0, 0.0], 3.0, 0.5).unwrap();
        assert_eq!(w.0, 3.0);
        assert!(w.1.is_infinite());
    }

    #[test]
    fn face_crossing_static_body() {
        let path = BodyPath::dynamic(0.0, 0.0, 0.0);
        // particle at x=5 moving left at speed 1; right face at +1
        let hit = face_crossing(&path, 1.0, Face::Right, 0.0, 5.0, -1.0, 0.0, 100.0).unwrap();
        assert!((hit.t - 4.0).abs() < 1e-9);
        assert_eq!(hit.v_body, 0.0);
    }

    #[test]
    fn face_crossing_accelerating_body_catches_particle() {
        // body from rest with drive a=0.2 catches a slow particle ahead
        let path = BodyPath::dynamic(0.0, 0.0, 0.2);
        // particle ahead at x=2 moving right at 0.3; right face offset +1
        // crossing: 1 + 0.1 t^2 = 2 + 0.3 t -> t ~ 4.79
        let hit = face_crossing(&path, 1.0, Face::Right, 0.0, 2.0, 0.3, 0.0, 100.0).unwrap();
        let want = (0.3 + (0.09f64 + 0.4).sqrt()) / 0.2;
        assert!((hit.t - want).abs() < 1e-7, "t = {} want {want}", hit.t);
    }

    #[test]
    fn prescribed_path_nodes_are_exact() {
        let times = vec![0.0, 0.5, 1.0, 2.0];
        let values = vec![0.9, 1.0, 0.95, 1.0];
        let motion = MotionGrid::new(times.clone(), values).unwrap();
        let path = BodyPath::from_motion(&motion, -3.0);
        for &t in &times {
            let want = -3.0 + motion.integral(t);
            assert!((path.x(t) - want).abs() < 1e-12, "node {t}");
        }
    }

    #[test]
    fn kick_preserves_continuity() {
        let mut path = BodyPath::dynamic(0.0, 1.0, 0.5);
        let x_before = path.x(2.0);
        path.kick(2.0, -0.3);
        assert!((path.x(2.0) - x_before).abs() < 1e-12);
        assert!((path.v(2.0) - (1.0 + 0.5 * 2.0 - 0.3)).abs() < 1e-12);
    }
}
