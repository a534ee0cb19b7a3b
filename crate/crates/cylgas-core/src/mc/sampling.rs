//! Counter-based random streams and the phase-space samplers.
//!
//! Every particle owns the ChaCha8 stream `(seed, particle index)`, so a
//! particle's entire history is reproducible regardless of scheduling or
//! worker count. Initial perpendicular states are drawn from the capsule
//! (stadium) swept by the face disc along the particle's perpendicular
//! drift: a particle whose perpendicular line never comes within the radius
//! `r` of the axis during the run can never touch the body, so that region
//! carries all of the relevant phase mass. The capsule restriction is exact
//! up to the 1e-9 quantile cap on the perpendicular speed.

use alloc::vec::Vec;

use crate::kernel::{AxialKernel, InitialDensity, KernelFamily, PerpProfile};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// Stream for one particle: `set_stream` gives 2^64 independent substreams
/// of the run seed.
pub fn particle_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform in (0, 1]; the nonzero guarantee protects `ln` draws.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (((rng.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal pair by Box-Muller.
pub fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = uniform(rng);
    let u2 = uniform(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * core::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Inverse-CDF sampler for the axial density, on a fixed table.
#[derive(Debug, Clone)]
pub struct AxialSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl AxialSampler {
    /// Tabulates the normalized CDF of `a0` out to the 1 - 1e-12 quantile.
    pub fn new(a0: &InitialDensity) -> Self {
        let l = a0.quantile_abs(1.0 - 1e-12).max(1e-6);
        let n = 4096usize;
        let mut grid = Vec::with_capacity(n + 1);
        let mut cdf = Vec::with_capacity(n + 1);
        let h = 2.0 * l / n as f64;
        let mut acc = 0.0;
        grid.push(-l);
        cdf.push(0.0);
        for i in 0..n {
            let a = -l + h * i as f64;
            let b = a + h;
            // Simpson on the cell
            acc += h / 6.0 * (a0.eval(a) + 4.0 * a0.eval(0.5 * (a + b)) + a0.eval(b));
            grid.push(b);
            cdf.push(acc);
        }
        let total = acc;
        for c in cdf.iter_mut() {
            *c /= total;
        }
        AxialSampler { grid, cdf }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = uniform(rng);
        let k = match self
            .cdf
            .binary_search_by(|probe| probe.total_cmp(&u))
        {
            Ok(k) => k,
            Err(k) => k.max(1),
        }
        .min(self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.grid[k - 1] + frac * (self.grid[k] - self.grid[k - 1])
    }
}

/// Outgoing axial speed of a diffuse reflection: the flux-weighted density
/// `s k(s, w)/|w|` on the outgoing half-line. All built-in families invert in
/// closed form.
pub fn sample_outgoing_speed(kernel: &AxialKernel, w_in: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = uniform(rng);
    let wa = w_in.abs();
    match kernel.family() {
        KernelFamily::GaussFlux { beta } => (-(1.0 - u).ln() / beta).sqrt(),
        KernelFamily::NarrowGauss => (-(1.0 - u).ln() * wa).sqrt(),
        KernelFamily::PowerFamily { beta } => {
            if wa == 0.0 {
                return 0.0;
            }
            (-(1.0 - u).ln() * wa.powf(1.0 - beta)).sqrt()
        }
        KernelFamily::PolyDecay { n } => ((1.0 - u).powf(2.0 / (2.0 - n)) - 1.0).sqrt(),
    }
}

/// Perpendicular velocity drawn from the isotropic Gaussian profile.
pub fn sample_perp_velocity(perp: &PerpProfile, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let (g1, g2) = normal_pair(rng);
    match perp.dim_perp() {
        1 => [perp.sigma() * g1, 0.0],
        _ => [perp.sigma() * g1, perp.sigma() * g2],
    }
}

/// One sampled particle (dead particles represent rejected phase mass and
/// never contribute).
#[derive(Debug, Clone, Copy)]
pub struct Sampled {
    pub x: f64,
    pub rho: [f64; 2],
    pub vx: f64,
    pub uperp: [f64; 2],
    pub alive: bool,
}

/// Geometry of the capsule sampler, fixed per run.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    pub axial: AxialSampler,
    pub l_dom: f64,
    pub r: f64,
    pub half_length: f64,
    pub t_max: f64,
    pub u_cap: f64,
    pub area_max: f64,
    /// Total represented mass: `2 L mass(a0) * A_max` over the acceptance
    /// envelope; divide by `n` for the per-particle weight.
    pub mass_envelope: f64,
}

impl InitialSampler {
    pub fn new(
        a0: &InitialDensity,
        perp: &PerpProfile,
        l_dom: f64,
        r: f64,
        half_length: f64,
        t_max: f64,
        n: u64,
    ) -> (Self, f64) {
        let u_cap = perp.radial_quantile(1.0 - 1e-9);
        let area_max = capsule_area(r, u_cap * t_max);
        let mass_envelope = 2.0 * l_dom * a0.mass() * area_max;
        let weight = mass_envelope / n as f64;
        (
            InitialSampler {
                axial: AxialSampler::new(a0),
                l_dom,
                r,
                half_length,
                t_max,
                u_cap,
                area_max,
                mass_envelope,
            },
            weight,
        )
    }

    /// Draws particle `index`'s initial state from its own stream. The same
    /// stream continues to drive that particle's reflections.
    pub fn draw(&self, perp: &PerpProfile, rng: &mut ChaCha8Rng) -> Sampled {
        let uperp = sample_perp_velocity(perp, rng);
        let speed = (uperp[0] * uperp[0] + uperp[1] * uperp[1]).sqrt();
        let accept = uniform(rng);
        let x = -self.l_dom + 2.0 * self.l_dom * uniform(rng);
        let rho = sample_capsule(self.r, speed * self.t_max, uperp, rng);
        let vx = self.axial.sample(rng);
        let mut alive = speed <= self.u_cap;
        let area = capsule_area(self.r, speed * self.t_max);
        if accept > area / self.area_max {
            alive = false;
        }
        // exclude the body interior (mass inside the body is zero)
        let inside_radial = rho[0] * rho[0] + rho[1] * rho[1] <= self.r * self.r;
        if inside_radial && x.abs() <= self.half_length {
            alive = false;
        }
        Sampled {
            x,
            rho,
            vx,
            uperp,
            alive,
        }
    }
}

/// Area of the stadium swept by a radius-`r` disc over a segment of length
/// `len`.
pub fn capsule_area(r: f64, len: f64) -> f64 {
    core::f64::consts::PI * r * r + 2.0 * r * len
}

/// Uniform point in the capsule of starting positions whose forward drift
/// enters the disc: the disc at the origin plus the rectangle swept backward
/// along `-uperp`.
fn sample_capsule(r: f64, len: f64, uperp: [f64; 2], rng: &mut ChaCha8Rng) -> [f64; 2] {
    let speed = (uperp[0] * uperp[0] + uperp[1] * uperp[1]).sqrt();
    let (ax, ay) = if speed > 0.0 {
        (-uperp[0] / speed, -uperp[1] / speed)
    } else {
        (1.0, 0.0)
    };
    let total = capsule_area(r, len);
    let pick = uniform(rng) * total;
    if pick <= 2.0 * r * len {
        // rectangle part
        let along = uniform(rng) * len;
        let across = (2.0 * uniform(rng) - 1.0) * r;
        [
            ax * along - ay * across,
            ay * along + ax * across,
        ]
    } else {
        // the two end half-discs combine into one disc; attach by side
        loop {
            let px = 2.0 * uniform(rng) - 1.0;
            let py = 2.0 * uniform(rng) - 1.0;
            if px * px + py * py <= 1.0 {
                let (dx, dy) = (px * r, py * r);
                // component along the sweep axis decides which end
                let along = dx * ax + dy * ay;
                if along >= 0.0 {
                    return [ax * len + dx, ay * len + dy];
                }
                return [dx, dy];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_kernel;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = particle_rng(42, 7);
        let mut a2 = particle_rng(42, 7);
        let mut b = particle_rng(42, 8);
        let xs: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xs2: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(xs, xs2);
        assert_ne!(xs, ys);
    }

    #[test]
    fn axial_sampler_moments() {
        let a0 = InitialDensity::gaussian(1.0, None).unwrap();
        let sampler = AxialSampler::new(&a0);
        let mut rng = particle_rng(1, 0);
        let n = 200_000;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for _ in 0..n {
            let v = sampler.sample(&mut rng);
            mean += v;
            m2 += v * v;
        }
        mean /= n as f64;
        m2 /= n as f64;
        // variance of N(0, 1/2): sigma/sqrt(n) ~ 0.0016
        assert!(mean.abs() < 5.0 * (0.5f64 / n as f64).sqrt(), "mean {mean}");
        assert!((m2 - 0.5).abs() < 5.0 * (0.75f64 / n as f64).sqrt(), "m2 {m2}");
    }

    #[test]
    fn outgoing_speed_matches_flux_moment() {
        // E[s^2] under s k(s,w)/|w| equals m2(w)/|w| (GaussFlux: 1/beta)
        let kernel = make_kernel(KernelFamily::GaussFlux { beta: 1.0 }).unwrap();
        let mut rng = particle_rng(3, 0);
        let n = 200_000;
        let mut m2 = 0.0;
        for _ in 0..n {
            let s = sample_outgoing_speed(&kernel, -0.7, &mut rng);
            m2 += s * s;
        }
        m2 /= n as f64;
        assert!((m2 - 1.0).abs() < 5.0 * (1.0f64 / n as f64).sqrt() * 2.0, "{m2}");
    }

    #[test]
    fn outgoing_speed_poly_decay_cdf() {
        // closed-form flux CDF: 1 - (1+s^2)^{(2-n)/2}
        let kernel = make_kernel(KernelFamily::PolyDecay { n: 6.0 }).unwrap();
        let mut rng = particle_rng(9, 0);
        let n = 100_000;
        let s_ref = 0.8f64;
        let want = 1.0 - (1.0 + s_ref * s_ref).powf(-2.0);
        let mut hits = 0u64;
        for _ in 0..n {
            if sample_outgoing_speed(&kernel, -0.3, &mut rng) <= s_ref {
                hits += 1;
            }
        }
        let got = hits as f64 / n as f64;
        assert!(
            (got - want).abs() < 5.0 * (want * (1.0 - want) / n as f64).sqrt(),
            "{got} vs {want}"
        );
    }

    #[test]
    fn capsule_points_enter_disc() {
        let mut rng = particle_rng(5, 0);
        let r = 0.5;
        let t_max = 10.0;
        for _ in 0..2000 {
            let uperp = sample_perp_velocity(&PerpProfile::gaussian(2, 1.0).unwrap(), &mut rng);
            let speed = (uperp[0] * uperp[0] + uperp[1] * uperp[1]).sqrt();
            let rho = sample_capsule(r, speed * t_max, uperp, &mut rng);
            // minimum distance of rho + uperp*t to the axis over [0, t_max]
            let mut min_d = f64::INFINITY;
            for i in 0..=400 {
                let t = t_max * i as f64 / 400.0;
                let dx = rho[0] + uperp[0] * t;
                let dy = rho[1] + uperp[1] * t;
                min_d = min_d.min((dx * dx + dy * dy).sqrt());
            }
            assert!(min_d <= r * 1.0001, "min distance {min_d}");
        }
    }
}
