//! SLIP-guided locomotion learning.
//!
//! The crate is `no_std` (with `alloc`) and holds all of the numerics:
//!
//! - [`slip`]: hybrid spring-loaded inverted pendulum dynamics and its apex return map.
//! - [`gait`]: periodic SLIP gait synthesis and time-sampled reference trajectories.
//! - [`bound`]: space-time bounds around a reference CoM trajectory.
//! - [`sim`]: a planar floating-base biped with penalty ground contact.
//! - [`env`]: the learning environment (observation, reward, termination).
//! - [`symmetry`]: mirror maps, the policy symmetry loss and batch augmentation.
//! - [`learn`]: a soft actor-critic learner built on a small dense-matrix core.
//!
//! File formats, configuration loading and the command-line tool live in the
//! `slipguide` companion crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bound;
pub mod env;
pub mod gait;
pub mod learn;
pub mod sim;
pub mod slip;
pub mod symmetry;

/// Seeded pseudo-random generator used everywhere randomness is needed.
pub type Prng = rand_chacha::ChaCha8Rng;

/// Standard gravity used by the robot presets [m/s²].
pub const GRAVITY: f64 = 9.81;
