//! Event-driven free-molecular Monte Carlo: the independent oracle for the
//! memory force and for the coupled body-gas dynamics.
//!
//! Particles are sampled from the capsule of perpendicular states that can
//! ever touch the body (exact up to a 1e-9 quantile cap) and simulated
//! against the moving cylinder. Two couplings:
//!
//! * `PrescribedMotion`: the body follows a given velocity history; particles
//!   are mutually independent, and chunked runs merge deterministically in
//!   index order whatever the worker count.
//! * `SelfConsistent`: collisions kick the body (`dV = weight (u - v_out)`,
//!   unit body mass) and the drive acts between events; a lazy-invalidation
//!   event queue keeps the shared timeline consistent. Body kicks are
//!   O(weight), so a stale hit prediction can reorder events only within an
//!   O(weight) time neighborhood, far below sampling noise.
//!
//! The memory-force estimate pairs each particle with a ghost that continues
//! the pre-collision straight line through the body. Real and ghost tallies
//! cancel exactly until the first face collision, so the difference
//! `R_est = (ghost crossings - real recollisions)` isolates the recollision
//! force with noise proportional to the small recolliding population, not to
//! the full incident flux. Face tallies use the expected impulse
//! `sign(w) ell(w)/|w|` conditioned on the incidence (the mean of the sampled
//! reflection law), removing the reflection-draw variance.

pub mod geometry;
pub mod sampling;

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;

use crate::force::{ForceField, ForceModel, LateralVariant};
use crate::kernel::KernelFamily;
use crate::motion::{Face, MotionGrid};
use geometry::{face_crossing, radial_window, BodyPath, Crossing};
use rand_chacha::ChaCha8Rng;
use sampling::{
    particle_rng, sample_outgoing_speed, sample_perp_velocity, uniform, AxialSampler,
    InitialSampler,
};

use core::cmp::Ordering;
use core::fmt;

#[cfg(not(feature = "std"))]
use crate::math::F64Ext as _;

/// How the body couples to the sampled gas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    PrescribedMotion,
    SelfConsistent,
}

/// Simulation parameters. Geometry (radius, length, dimension) lives on the
/// force model; the run requires `d = 3`.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub n_particles: u64,
    /// Axial half-extent of the initial particle reservoir.
    pub domain_halflength: f64,
    pub t_max: f64,
    /// Right edges of the output bins; strictly increasing, last one at
    /// `t_max`.
    pub output_times: Vec<f64>,
    pub seed: u64,
    pub coupling: Coupling,
    /// Specular fraction of the lateral boundary (the end-face `alpha` is a
    /// model property).
    pub alpha_lateral: f64,
    /// Particle blocks for jackknife error bars.
    pub blocks: u32,
}

impl McConfig {
    pub fn uniform_outputs(n_particles: u64, t_max: f64, n_bins: usize, seed: u64) -> Self {
        let output_times = (1..=n_bins)
            .map(|i| t_max * i as f64 / n_bins as f64)
            .collect();
        McConfig {
            n_particles,
            domain_halflength: 0.0, // sized at validation
            t_max,
            output_times,
            seed,
            coupling: Coupling::PrescribedMotion,
            alpha_lateral: 0.0,
            blocks: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum McError {
    BadConfig(&'static str),
    /// The axial reservoir cannot cover the body for the full horizon at the
    /// 1 - 1e-6 speed quantile.
    DomainTooSmall { needed: f64, got: f64 },
    NotThreeDimensional,
    MissingPrescribedMotion,
    EventQueueOverflow,
}

impl fmt::Display for McError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McError::BadConfig(m) => write!(f, "invalid Monte Carlo config: {m}"),
            McError::DomainTooSmall { needed, got } => {
                write!(f, "domain half-length {got} below required {needed}")
            }
            McError::NotThreeDimensional => write!(f, "Monte Carlo runs require d = 3"),
            McError::MissingPrescribedMotion => {
                write!(f, "PrescribedMotion coupling needs a motion history")
            }
            McError::EventQueueOverflow => write!(f, "event queue overflow"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for McError {}

/// A sampled phase-space point (alive particles only).
#[derive(Debug, Clone, Copy)]
pub struct Particle {
    pub x: f64,
    pub rho: [f64; 2],
    pub vx: f64,
    pub uperp: [f64; 2],
}

/// Per-bin accumulators; gains are body-momentum changes per unit simulated
/// mass (multiply by the particle weight for physical units).
#[derive(Debug, Clone, Copy, Default)]
pub struct BinTally {
    /// Expected gains of first face collisions.
    pub gain_first: f64,
    /// Expected gains of second and later face collisions.
    pub gain_recoll: f64,
    /// Expected gains of post-fork ghost crossings (fictitious gas).
    pub gain_ghost: f64,
    /// Sampled axial impulses of lateral events.
    pub lat_gain: f64,
    pub n_end: u64,
    pub n_lat: u64,
}

impl BinTally {
    fn add(&mut self, o: &BinTally) {
        self.gain_first += o.gain_first;
        self.gain_recoll += o.gain_recoll;
        self.gain_ghost += o.gain_ghost;
        self.lat_gain += o.lat_gain;
        self.n_end += o.n_end;
        self.n_lat += o.n_lat;
    }
}

/// Tally of one particle block.
#[derive(Debug, Clone)]
pub struct BlockTally {
    pub bins: Vec<BinTally>,
    pub n_alive: u64,
}

impl BlockTally {
    fn new(n_bins: usize) -> Self {
        BlockTally {
            bins: alloc::vec![BinTally::default(); n_bins],
            n_alive: 0,
        }
    }
    fn merge(&mut self, o: &BlockTally) {
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            a.add(b);
        }
        self.n_alive += o.n_alive;
    }
}

/// Run output: per-bin velocity, memory-force estimate with error bars, and
/// event statistics.
#[derive(Debug, Clone)]
pub struct McRun {
    pub output_times: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma_v: Vec<f64>,
    pub r_est: Vec<f64>,
    pub sigma_r: Vec<f64>,
    /// Measured end-face drag per bin (first + recollisions, sign of F).
    pub f_end: Vec<f64>,
    pub n_events_end: Vec<u64>,
    pub n_events_lateral: Vec<u64>,
    /// Total sampled lateral axial impulse and its block sigma (null test
    /// under `ZeroLateral`).
    pub lateral_impulse: f64,
    pub lateral_impulse_sigma: f64,
    pub weight: f64,
    pub n_alive: u64,
}

/// Mean outgoing speed of the sampled diffuse emission law; the exact
/// conditional mean of `sample_outgoing_speed`, so expected-impulse tallies
/// are unbiased for the sampled process.
fn emission_mean_speed(family: KernelFamily, poly_mean: f64, w: f64) -> f64 {
    const HALF_SQRT_PI: f64 = 0.886_226_925_452_758;
    let wa = w.abs();
    match family {
        KernelFamily::GaussFlux { beta } => HALF_SQRT_PI / beta.sqrt(),
        KernelFamily::NarrowGauss => HALF_SQRT_PI * wa.sqrt(),
        KernelFamily::PowerFamily { beta } => HALF_SQRT_PI * wa.powf((1.0 - beta) / 2.0),
        KernelFamily::PolyDecay { .. } => poly_mean,
    }
}

/// Expected body-momentum gain of one face event with incident relative
/// velocity `w`: `alpha 2w + (1-alpha)(w -/+ E[s]) = sign(w) ell_s(w)/|w|`.
fn expected_gain(model: &ForceModel, poly_mean: f64, w: f64) -> f64 {
    let alpha = model.alpha();
    let es = emission_mean_speed(model.kernel().family(), poly_mean, w);
    (1.0 + alpha) * w - (1.0 - alpha) * w.signum() * es
}

fn poly_mean_speed(model: &ForceModel) -> f64 {
    if let KernelFamily::PolyDecay { .. } = model.kernel().family() {
        // E[s] under c s (1+s^2)^{-n/2}: fixed by the kernel's normalization
        let k = model.kernel().clone();
        crate::quad::integrate(
            |s| s * s * k.eval(s, 1.0),
            0.0,
            f64::INFINITY,
            1e-10,
        )
        .map(|r| r.value)
        .unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Samples the full initial particle set (the alive subset) plus the common
/// weight. Mostly useful for moment tests; the runners stream particles
/// without materializing them.
pub fn sample_initial(model: &ForceModel, cfg: &McConfig) -> Result<(Vec<Particle>, f64), McError> {
    let (sampler, weight) = build_sampler(model, cfg)?;
    let mut out = Vec::new();
    for i in 0..cfg.n_particles {
        let mut rng = particle_rng(cfg.seed, i);
        let s = sampler.draw(model.perp(), &mut rng);
        if s.alive {
            out.push(Particle {
                x: s.x,
                rho: s.rho,
                vx: s.vx,
                uperp: s.uperp,
            });
        }
    }
    Ok((out, weight))
}

fn build_sampler(model: &ForceModel, cfg: &McConfig) -> Result<(InitialSampler, f64), McError> {
    if model.dim() != 3 {
        return Err(McError::NotThreeDimensional);
    }
    if cfg.n_particles == 0 {
        return Err(McError::BadConfig("n_particles must be positive"));
    }
    if !(cfg.t_max > 0.0) {
        return Err(McError::BadConfig("t_max must be positive"));
    }
    if cfg.output_times.is_empty()
        || cfg
            .output_times
            .windows(2)
            .any(|w| !(w[1] > w[0]))
        || cfg.output_times[0] <= 0.0
        || (cfg.output_times.last().unwrap() - cfg.t_max).abs() > 1e-9 * cfg.t_max
    {
        return Err(McError::BadConfig(
            "output_times must increase strictly from > 0 to t_max",
        ));
    }
    if !(0.0..=1.0).contains(&cfg.alpha_lateral) {
        return Err(McError::BadConfig("alpha_lateral must lie in [0, 1]"));
    }
    if cfg.blocks == 0 || cfg.blocks as u64 > cfg.n_particles {
        return Err(McError::BadConfig("blocks must be in [1, n_particles]"));
    }
    // the axial reservoir must outrun every fresh particle that could reach
    // the body within the horizon at the 1 - 1e-6 speed quantile
    let needed = required_halflength(model, cfg);
    let l_dom = if cfg.domain_halflength == 0.0 {
        // auto-size
        needed * 1.02
    } else if cfg.domain_halflength < needed {
        return Err(McError::DomainTooSmall {
            needed,
            got: cfg.domain_halflength,
        });
    } else {
        cfg.domain_halflength
    };
    let (sampler, weight) = InitialSampler::new(
        model.a0(),
        model.perp(),
        l_dom,
        model.radius(),
        model.cyl_length() / 2.0,
        cfg.t_max,
        cfg.n_particles,
    );
    Ok((sampler, weight))
}

/// Minimal axial half-extent: the body's farthest face reach (with headroom
/// for self-consistent velocity fluctuations) plus the distance a fresh
/// particle at the 1 - 1e-6 speed quantile covers over the horizon. A zero
/// `domain_halflength` in the config auto-sizes to this bound.
pub fn required_halflength(model: &ForceModel, cfg: &McConfig) -> f64 {
    let q_ax = model.a0().quantile_abs(1.0 - 1e-6);
    let v_reach = model.v_inf().abs().max(model.v0().abs());
    let body_reach = model.cyl_length() / 2.0 + 1.5 * v_reach * cfg.t_max + 1.0;
    body_reach + q_ax * cfg.t_max
}

/// Outgoing velocity of one end-face reflection; the specular branch flips
/// the relative axial velocity, the diffuse branch draws the flux-weighted
/// emission law of the kernel and a fresh perpendicular velocity.
pub fn reflect(
    model: &ForceModel,
    face: Face,
    v_body: f64,
    vx_in: f64,
    uperp_in: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> (f64, [f64; 2]) {
    if uniform(rng) < model.alpha() {
        return (2.0 * v_body - vx_in, uperp_in);
    }
    let w = vx_in - v_body;
    let s = sample_outgoing_speed(model.kernel(), w, rng);
    let vx_out = match face {
        Face::Right => v_body + s,
        Face::Left => v_body - s,
    };
    (vx_out, sample_perp_velocity(model.perp(), rng))
}

/// Lateral reflection. Under `ZeroLateral` the law ignores the body velocity
/// (specular in the surface normal, or diffuse with the axial marginal of the
/// initial state); the monotone variant centers the axial draw on the body.
#[allow(clippy::too_many_arguments)]
fn reflect_lateral(
    model: &ForceModel,
    axial: &AxialSampler,
    alpha_lateral: f64,
    v_body: f64,
    n_hat: [f64; 2],
    vx_in: f64,
    uperp_in: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> (f64, [f64; 2]) {
    if uniform(rng) < alpha_lateral {
        // specular: flip the normal component, keep tangential and axial
        let un = uperp_in[0] * n_hat[0] + uperp_in[1] * n_hat[1];
        return (
            vx_in,
            [
                uperp_in[0] - 2.0 * un * n_hat[0],
                uperp_in[1] - 2.0 * un * n_hat[1],
            ],
        );
    }
    let sigma = model.perp().sigma();
    // outward flux-weighted normal speed (Rayleigh) and Gaussian tangential
    let sn = sigma * (-2.0 * uniform(rng).ln()).sqrt();
    let (g, _) = sampling::normal_pair(rng);
    let st = sigma * g;
    let t_hat = [-n_hat[1], n_hat[0]];
    let uperp = [
        sn * n_hat[0] + st * t_hat[0],
        sn * n_hat[1] + st * t_hat[1],
    ];
    let vx = match model.lateral_variant() {
        LateralVariant::ZeroLateral => axial.sample(rng),
        LateralVariant::MonotoneLateral => v_body + axial.sample(rng),
    };
    (vx, uperp)
}

struct RunContext<'a> {
    model: &'a ForceModel,
    cfg: &'a McConfig,
    sampler: InitialSampler,
    poly_mean: f64,
    half_length: f64,
}

impl<'a> RunContext<'a> {
    fn bin_of(&self, t: f64) -> usize {
        let ots = &self.cfg.output_times;
        match ots.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(k) => k,
            Err(k) => k.min(ots.len() - 1),
        }
    }
}

/// Walks one particle through the prescribed body path and accumulates its
/// tallies. Returns the sampled lateral axial impulse sum.
fn simulate_particle(
    ctx: &RunContext<'_>,
    path: &BodyPath,
    axial: &AxialSampler,
    idx: u64,
    tally: &mut BlockTally,
) -> f64 {
    let mut rng = particle_rng(ctx.cfg.seed, idx);
    let s = ctx.sampler.draw(ctx.model.perp(), &mut rng);
    if !s.alive {
        return 0.0;
    }
    tally.n_alive += 1;
    let mut t = 0.0f64;
    let mut x = s.x;
    let mut rho = s.rho;
    let mut vx = s.vx;
    let mut uperp = s.uperp;
    let mut face_hits = 0u32;
    let mut lat_impulse = 0.0;
    let t_max = ctx.cfg.t_max;
    let r = ctx.model.radius();

    for _leg in 0..10_000 {
        let window = match radial_window(rho, uperp, t, r) {
            Some(w) => w,
            None => break,
        };
        let (w_in, w_out) = (window.0.max(t), window.1.min(t_max));
        if !(w_out > w_in) && !(window.0 <= t && window.1 >= t) {
            break;
        }
        // candidates inside the radial window
        let mut next: Option<(f64, EventKind)> = None;
        let mut consider = |t_ev: f64, kind: EventKind| {
            if t_ev > t && t_ev <= t_max {
                if next.map_or(true, |(tb, _)| t_ev < tb) {
                    next = Some((t_ev, kind));
                }
            }
        };
        // lateral entry at the window opening (moving inward), if the body
        // is axially there
        if window.0 > t && window.0 <= t_max {
            let t_in = window.0;
            let xp = x + vx * (t_in - t);
            let bx = path.x(t_in);
            if xp > bx - ctx.half_length && xp < bx + ctx.half_length {
                consider(t_in, EventKind::Lateral);
            }
        }
        let scan_from = w_in.max(t);
        let scan_to = w_out;
        if scan_to > scan_from {
            if let Some(hit) = face_crossing(
                path,
                ctx.half_length,
                Face::Right,
                t,
                x,
                vx,
                scan_from,
                scan_to,
            ) {
                consider(hit.t, EventKind::Face(hit));
            }
            if let Some(hit) = face_crossing(
                path,
                -ctx.half_length,
                Face::Left,
                t,
                x,
                vx,
                scan_from,
                scan_to,
            ) {
                consider(hit.t, EventKind::Face(hit));
            }
        }

        let (t_ev, kind) = match next {
            Some(n) => n,
            None => break, // leaves the tube or reaches the horizon untouched
        };

        // advance free flight
        rho = [
            rho[0] + uperp[0] * (t_ev - t),
            rho[1] + uperp[1] * (t_ev - t),
        ];
        x += vx * (t_ev - t);
        t = t_ev;

        match kind {
            EventKind::Face(hit) => {
                let w_rel = vx - hit.v_body;
                let incident_ok = match hit.face {
                    Face::Right => w_rel <= 0.0,
                    Face::Left => w_rel >= 0.0,
                };
                if !incident_ok {
                    // grazing the plane from the emission side cannot happen
                    // for real particles; step off and continue
                    t += 1e-12 * (1.0 + t);
                    continue;
                }
                let bin = ctx.bin_of(t);
                tally.bins[bin].n_end += 1;
                let gain = expected_gain(ctx.model, ctx.poly_mean, w_rel);
                face_hits += 1;
                if face_hits == 1 {
                    tally.bins[bin].gain_first += gain;
                    // fork the ghost: straight continuation of the incident
                    // trajectory through the body
                    ghost_crossings(ctx, path, t, x, rho, vx, uperp, tally);
                } else {
                    tally.bins[bin].gain_recoll += gain;
                }
                let (vx_out, uperp_out) =
                    reflect(ctx.model, hit.face, hit.v_body, vx, uperp, &mut rng);
                vx = vx_out;
                uperp = uperp_out;
            }
            EventKind::Lateral => {
                let norm = (rho[0] * rho[0] + rho[1] * rho[1]).sqrt();
                let n_hat = [rho[0] / norm, rho[1] / norm];
                let v_body = path.v(t);
                let (vx_out, uperp_out) = reflect_lateral(
                    ctx.model,
                    axial,
                    ctx.cfg.alpha_lateral,
                    v_body,
                    n_hat,
                    vx,
                    uperp,
                    &mut rng,
                );
                let bin = ctx.bin_of(t);
                tally.bins[bin].n_lat += 1;
                tally.bins[bin].lat_gain += vx - vx_out;
                lat_impulse += vx - vx_out;
                vx = vx_out;
                uperp = uperp_out;
            }
        }
    }
    lat_impulse
}

#[derive(Clone, Copy)]
enum EventKind {
    Face(Crossing),
    Lateral,
}

/// Enumerates the phantom crossings of the fictitious straight-line
/// continuation, tallying expected impulses of incident-side passes. The
/// fork crossing itself is excluded (it cancels the real first collision).
#[allow(clippy::too_many_arguments)]
fn ghost_crossings(
    ctx: &RunContext<'_>,
    path: &BodyPath,
    t_fork: f64,
    x_fork: f64,
    rho: [f64; 2],
    vx: f64,
    uperp: [f64; 2],
    tally: &mut BlockTally,
) {
    let r = ctx.model.radius();
    let t_max = ctx.cfg.t_max;
    let window = match radial_window(rho, uperp, t_fork, r) {
        Some(w) => w,
        None => return,
    };
    let mut t = t_fork * (1.0 + 1e-12) + 1e-15;
    let t_end = window.1.min(t_max);
    for _ in 0..1000 {
        if t >= t_end {
            break;
        }
        let right = face_crossing(
            path,
            ctx.half_length,
            Face::Right,
            t_fork,
            x_fork,
            vx,
            t,
            t_end,
        );
        let left = face_crossing(
            path,
            -ctx.half_length,
            Face::Left,
            t_fork,
            x_fork,
            vx,
            t,
            t_end,
        );
        let hit = match (right, left) {
            (Some(a), Some(b)) => {
                if a.t <= b.t {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => break,
        };
        let w_rel = vx - hit.v_body;
        let incident_ok = match hit.face {
            Face::Right => w_rel <= 0.0,
            Face::Left => w_rel >= 0.0,
        };
        if incident_ok {
            let bin = ctx.bin_of(hit.t);
            tally.bins[bin].gain_ghost += expected_gain(ctx.model, ctx.poly_mean, w_rel);
        }
        t = hit.t * (1.0 + 1e-12) + 1e-15;
    }
}

/// One block of prescribed-motion particles; pure, so blocks can run on any
/// worker in any order and merge by index.
pub fn prescribed_block(
    model: &ForceModel,
    cfg: &McConfig,
    motion: &MotionGrid,
    block_index: u32,
) -> Result<(BlockTally, f64), McError> {
    let (sampler, _weight) = build_sampler(model, cfg)?;
    let ctx = RunContext {
        model,
        cfg,
        sampler,
        poly_mean: poly_mean_speed(model),
        half_length: model.cyl_length() / 2.0,
    };
    let axial = ctx.sampler.axial.clone();
    let path = BodyPath::from_motion(motion, 0.0);
    let (lo, hi) = block_range(cfg.n_particles, cfg.blocks, block_index);
    let mut tally = BlockTally::new(cfg.output_times.len());
    let mut lat = 0.0;
    for idx in lo..hi {
        lat += simulate_particle(&ctx, &path, &axial, idx, &mut tally);
    }
    Ok((tally, lat))
}

pub fn block_range(n: u64, blocks: u32, index: u32) -> (u64, u64) {
    let b = blocks as u64;
    let i = index as u64;
    (n * i / b, n * (i + 1) / b)
}

/// Assembles the per-bin curves and jackknife error bars from block tallies.
#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &McConfig,
    weight: f64,
    v: Vec<f64>,
    sigma_v: Vec<f64>,
    blocks: &[BlockTally],
    lat_impulses: &[f64],
) -> McRun {
    let n_bins = cfg.output_times.len();
    let nb = blocks.len() as f64;
    let mut total = BlockTally::new(n_bins);
    for b in blocks {
        total.merge(b);
    }
    let mut r_est = Vec::with_capacity(n_bins);
    let mut sigma_r = Vec::with_capacity(n_bins);
    let mut f_end = Vec::with_capacity(n_bins);
    let mut n_end = Vec::with_capacity(n_bins);
    let mut n_lat = Vec::with_capacity(n_bins);
    let mut prev = 0.0;
    for j in 0..n_bins {
        let dt = cfg.output_times[j] - prev;
        prev = cfg.output_times[j];
        let stat = |b: &BinTally| (b.gain_ghost - b.gain_recoll) * weight / dt;
        r_est.push(stat(&total.bins[j]));
        // blocks are independent equal shares; Var(total) = nb * Var(block)
        let mean = stat(&total.bins[j]) / nb;
        let var = blocks
            .iter()
            .map(|b| {
                let d = stat(&b.bins[j]) - mean;
                d * d
            })
            .sum::<f64>()
            / (nb - 1.0).max(1.0);
        sigma_r.push((var * nb).sqrt());
        f_end.push(-(total.bins[j].gain_first + total.bins[j].gain_recoll) * weight / dt);
        n_end.push(total.bins[j].n_end);
        n_lat.push(total.bins[j].n_lat);
    }

    let lat_total: f64 = lat_impulses.iter().sum::<f64>() * weight;
    let lat_mean = lat_impulses.iter().sum::<f64>() / nb;
    let lat_var = lat_impulses
        .iter()
        .map(|l| (l - lat_mean) * (l - lat_mean))
        .sum::<f64>()
        / (nb - 1.0).max(1.0);
    let lat_sigma = (lat_var * nb).sqrt() * weight;

    McRun {
        output_times: cfg.output_times.clone(),
        v,
        sigma_v,
        r_est,
        sigma_r,
        f_end,
        n_events_end: n_end,
        n_events_lateral: n_lat,
        lateral_impulse: lat_total,
        lateral_impulse_sigma: lat_sigma,
        weight,
        n_alive: total.n_alive,
    }
}

/// Sequential run; see [`prescribed_block`] for the parallelizable unit of a
/// prescribed-motion run.
pub fn run(
    model: &ForceModel,
    cfg: &McConfig,
    prescribed: Option<&MotionGrid>,
) -> Result<McRun, McError> {
    match cfg.coupling {
        Coupling::PrescribedMotion => {
            let motion = prescribed.ok_or(McError::MissingPrescribedMotion)?;
            let mut blocks = Vec::with_capacity(cfg.blocks as usize);
            let mut lats = Vec::with_capacity(cfg.blocks as usize);
            let mut weight = 0.0;
            for b in 0..cfg.blocks {
                let (tally, lat) = prescribed_block(model, cfg, motion, b)?;
                let (_, w) = build_sampler(model, cfg)?;
                weight = w;
                blocks.push(tally);
                lats.push(lat);
            }
            let v: Vec<f64> = cfg.output_times.iter().map(|&t| motion.value(t)).collect();
            let sigma_v = alloc::vec![0.0; v.len()];
            Ok(assemble(cfg, weight, v, sigma_v, &blocks, &lats))
        }
        Coupling::SelfConsistent => run_self_consistent(model, cfg),
    }
}

/// Merges externally computed block tallies (the CLI's parallel driver).
pub fn assemble_prescribed(
    model: &ForceModel,
    cfg: &McConfig,
    motion: &MotionGrid,
    blocks: &[BlockTally],
    lat_impulses: &[f64],
) -> Result<McRun, McError> {
    let (_, weight) = build_sampler(model, cfg)?;
    let v: Vec<f64> = cfg.output_times.iter().map(|&t| motion.value(t)).collect();
    let sigma_v = alloc::vec![0.0; v.len()];
    Ok(assemble(cfg, weight, v, sigma_v, blocks, lat_impulses))
}

struct HeapEntry {
    t: f64,
    idx: u32,
    epoch: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.t.total_cmp(&other.t) == Ordering::Equal && self.idx == other.idx
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap by time (BinaryHeap is a max-heap)
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

#[derive(Clone, Copy)]
struct PState {
    t: f64,
    x: f64,
    rho: [f64; 2],
    vx: f64,
    uperp: [f64; 2],
    draws: u64,
    face_hits: u32,
    alive: bool,
}

/// Candidate next event for one particle against the current body path.
fn predict(
    ctx: &RunContext<'_>,
    path: &BodyPath,
    st: &PState,
) -> Option<(f64, EventKind)> {
    if !st.alive {
        return None;
    }
    let r = ctx.model.radius();
    let window = radial_window(st.rho, st.uperp, st.t, r)?;
    let t_max = ctx.cfg.t_max;
    let mut best: Option<(f64, EventKind)> = None;
    let mut consider = |t_ev: f64, kind: EventKind| {
        if t_ev > st.t && t_ev <= t_max && best.map_or(true, |(tb, _)| t_ev < tb) {
            best = Some((t_ev, kind));
        }
    };
    if window.0 > st.t && window.0 <= t_max {
        let t_in = window.0;
        let xp = st.x + st.vx * (t_in - st.t);
        let bx = path.x(t_in);
        if xp > bx - ctx.half_length && xp < bx + ctx.half_length {
            consider(t_in, EventKind::Lateral);
        }
    }
    let scan_from = window.0.max(st.t);
    let scan_to = window.1.min(t_max);
    if scan_to > scan_from {
        for (off, face) in [
            (ctx.half_length, Face::Right),
            (-ctx.half_length, Face::Left),
        ] {
            if let Some(hit) =
                face_crossing(path, off, face, st.t, st.x, st.vx, scan_from, scan_to)
            {
                consider(hit.t, EventKind::Face(hit));
            }
        }
    }
    best
}

fn run_self_consistent(model: &ForceModel, cfg: &McConfig) -> Result<McRun, McError> {
    let (sampler, weight) = build_sampler(model, cfg)?;
    let ctx = RunContext {
        model,
        cfg,
        sampler,
        poly_mean: poly_mean_speed(model),
        half_length: model.cyl_length() / 2.0,
    };
    let axial = ctx.sampler.axial.clone();
    let n = cfg.n_particles;
    let n_bins = cfg.output_times.len();
    let nb = cfg.blocks;

    // sample states (recording how many stream words each draw consumed, so
    // the particle's rng resumes exactly at its next event) and build the
    // initial queue against the drive-only path
    let mut path = BodyPath::dynamic(0.0, model.v0(), model.drive());
    let mut states: Vec<PState> = Vec::with_capacity(n as usize);
    for i in 0..n {
        let mut rng = particle_rng(cfg.seed, i);
        let s = ctx.sampler.draw(model.perp(), &mut rng);
        states.push(PState {
            t: 0.0,
            x: s.x,
            rho: s.rho,
            vx: s.vx,
            uperp: s.uperp,
            draws: rng.get_word_pos() as u64,
            face_hits: 0,
            alive: s.alive,
        });
    }

    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut epoch: u32 = 0;
    for (i, st) in states.iter().enumerate() {
        if let Some((t_ev, _)) = predict(&ctx, &path, st) {
            heap.push(HeapEntry {
                t: t_ev,
                idx: i as u32,
                epoch,
            });
        }
    }

    let mut blocks: Vec<BlockTally> = (0..nb).map(|_| BlockTally::new(n_bins)).collect();
    let mut lat_impulses = alloc::vec![0.0f64; nb as usize];
    blocks[0].n_alive = states.iter().filter(|s| s.alive).count() as u64;

    let mut pops: u64 = 0;
    let pop_budget = 200 * n + 1_000_000;
    while let Some(entry) = heap.pop() {
        pops += 1;
        if pops > pop_budget {
            return Err(McError::EventQueueOverflow);
        }
        if entry.t > cfg.t_max {
            break;
        }
        // fluctuations must keep the body inside the reach assumed by the
        // reservoir sizing; a violation воids the run
        if path.x(entry.t).abs() + ctx.half_length > ctx.sampler.l_dom {
            return Err(McError::BodyLeftDomain { t: entry.t });
        }
        let idx = entry.idx as usize;
        let st = states[idx];
        if !st.alive {
            continue;
        }
        let pred = predict(&ctx, &path, &st);
        let (t_ev, kind) = match pred {
            Some(p) => p,
            None => continue, // retired under the current path
        };
        if entry.epoch != epoch {
            // stale: requeue with the refreshed time
            heap.push(HeapEntry {
                t: t_ev,
                idx: entry.idx,
                epoch,
            });
            continue;
        }
        // fresh prediction: the heap guarantees no earlier candidate
        let block = (idx as u64 * nb as u64 / n) as usize;
        let tally = &mut blocks[block];
        let mut rng = particle_rng(cfg.seed, idx as u64);
        rng.set_word_pos(st.draws as u128);
        let mut new_st = st;
        new_st.rho = [
            st.rho[0] + st.uperp[0] * (t_ev - st.t),
            st.rho[1] + st.uperp[1] * (t_ev - st.t),
        ];
        new_st.x = st.x + st.vx * (t_ev - st.t);
        new_st.t = t_ev;
        match kind {
            EventKind::Face(hit) => {
                let w_rel = st.vx - hit.v_body;
                let incident_ok = match hit.face {
                    Face::Right => w_rel <= 0.0,
                    Face::Left => w_rel >= 0.0,
                };
                if incident_ok {
                    let bin = ctx.bin_of(t_ev);
                    tally.bins[bin].n_end += 1;
                    let gain = expected_gain(ctx.model, ctx.poly_mean, w_rel);
                    new_st.face_hits += 1;
                    if new_st.face_hits == 1 {
                        tally.bins[bin].gain_first += gain;
                        ghost_crossings(
                            &ctx, &path, t_ev, new_st.x, new_st.rho, st.vx, st.uperp, tally,
                        );
                    } else {
                        tally.bins[bin].gain_recoll += gain;
                    }
                    let (vx_out, uperp_out) =
                        reflect(ctx.model, hit.face, hit.v_body, st.vx, st.uperp, &mut rng);
                    // momentum conservation: the body absorbs the difference
                    path.kick(t_ev, weight * (st.vx - vx_out));
                    epoch += 1;
                    new_st.vx = vx_out;
                    new_st.uperp = uperp_out;
                } else {
                    new_st.t = t_ev * (1.0 + 1e-12) + 1e-15;
                }
            }
            EventKind::Lateral => {
                let norm = (new_st.rho[0] * new_st.rho[0] + new_st.rho[1] * new_st.rho[1]).sqrt();
                let n_hat = [new_st.rho[0] / norm, new_st.rho[1] / norm];
                let v_body = path.v(t_ev);
                let (vx_out, uperp_out) = reflect_lateral(
                    ctx.model,
                    &axial,
                    cfg.alpha_lateral,
                    v_body,
                    n_hat,
                    st.vx,
                    st.uperp,
                    &mut rng,
                );
                let bin = ctx.bin_of(t_ev);
                tally.bins[bin].n_lat += 1;
                tally.bins[bin].lat_gain += st.vx - vx_out;
                lat_impulses[block] += st.vx - vx_out;
                path.kick(t_ev, weight * (st.vx - vx_out));
                epoch += 1;
                new_st.vx = vx_out;
                new_st.uperp = uperp_out;
            }
        }
        new_st.draws = rng.get_word_pos() as u64;
        states[idx] = new_st;
        if let Some((t_next, _)) = predict(&ctx, &path, &new_st) {
            heap.push(HeapEntry {
                t: t_next,
                idx: entry.idx,
                epoch,
            });
        }
    }

    // output curves from the realized body path
    let v: Vec<f64> = cfg.output_times.iter().map(|&t| path.v(t)).collect();
    let mut sigma_v = Vec::with_capacity(v.len());
    let mut prev = 0.0;
    for &t in &cfg.output_times {
        // within-bin velocity spread as the fluctuation scale
        let m = 16;
        let mut mean = 0.0;
        let mut mean2 = 0.0;
        for i in 0..m {
            let s = prev + (t - prev) * (i as f64 + 0.5) / m as f64;
            let vv = path.v(s);
            mean += vv;
            mean2 += vv * vv;
        }
        mean /= m as f64;
        mean2 /= m as f64;
        sigma_v.push((mean2 - mean * mean).max(0.0).sqrt());
        prev = t;
    }
    Ok(assemble(cfg, weight, v, sigma_v, &blocks, &lat_impulses))
}
