//! Deterministic solver and Monte Carlo simulator for a rigid cylinder driven
//! by a constant force through a collisionless gas.
//!
//! A cylinder constrained to horizontal motion exchanges momentum with a sea of
//! non-interacting particles. Collisions at the end faces are a mixture of
//! specular reflection (probability `alpha`) and diffuse re-emission through a
//! flux-normalized kernel `k(v_x, u_x)`. Particles that hit the body, fly
//! ahead, and are caught again exert a long-memory force that turns the
//! approach to the terminal velocity from exponential into a power law
//! `t^-(d+p)`, where `p` is the low-speed exponent of the kernel's second
//! outgoing moment.
//!
//! The crate is organized around that story:
//!
//! * [`quad`] - adaptive Gauss-Kronrod quadrature shared by every moment and
//!   force integral,
//! * [`kernel`] - reflection kernels, perpendicular profiles, initial
//!   densities, and the assumption certifier,
//! * [`force`] - the recollisionless drag `F0`, lateral force variants,
//!   equilibrium velocity, and stiffness bounds,
//! * [`motion`] - candidate velocity histories, window averages, precollision
//!   roots, and the bracketing envelopes,
//! * [`memory`] - the precollision (memory) force `R_W(t)`,
//! * [`dynamics`] - the iteration map `W -> V_W` and the fixed-point driver,
//! * [`mc`] - an event-driven particle simulator used as an independent
//!   oracle,
//! * [`analysis`] - tail-exponent fits and solution verification reports.
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the default
//! `std` feature for embedded use. IO, parallel drivers, and the CLI live in
//! the companion `cylgas` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
pub mod force;
pub mod kernel;
pub mod math;
pub mod mc;
pub mod memory;
pub mod motion;
pub mod quad;



pub use kernel::{AxialKernel, InitialDensity, KernelFamily, PerpProfile};


