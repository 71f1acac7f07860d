//! Hierarchical CPG locomotion control for a six-legged robot.
//!
//! The crate is organised bottom-up along the control hierarchy:
//!
//! - [`oscillator`]: six coupled Hopf oscillators with an embedded tripod phase
//!   (the rhythm generator).
//! - [`pose`]: foot trajectories from amplitude and mixed phase, morphology
//!   updates and three-link leg kinematics (the pattern formation layer).
//! - [`skill`]: the two-dimensional skill space and its uniform sampler.
//! - [`reward`]: skill-discovery objectives, task rewards and distillation math.
//! - [`controller`]: high/mid level policies, dual-pathway routing and the
//!   multi-rate scheduler.
//! - [`sim`]: a kinematic body model that closes the loop, with fault
//!   injection, terrain and trajectory logging.
//! - [`config`], [`checks`], [`sweep`]: run configuration, invariant suites and
//!   batch sweeps used by the command-line front end.

pub mod checks;
pub mod config;
pub mod controller;
pub mod leg;
pub mod oscillator;
pub mod pose;
pub mod reward;
pub mod rng;
pub mod sim;
pub mod skill;
pub mod sweep;

pub use leg::{Leg, LEG_COUNT};
