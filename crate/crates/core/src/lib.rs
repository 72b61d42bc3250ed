//! Model-based optimistic posterior sampling (MOPS) for episodic contextual MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: tabular, linear-mixture and KNR environments, rollouts and exact policy values.
//! - [`divergences`]: Hellinger, KL and TV primitives, per-step losses and the prior-mass
//!   functional `omega`.
//! - [`planner`]: exact finite-horizon value iteration, model Bellman errors and a
//!   random-shooting planner for KNR models.
//! - [`posterior`]: finite model classes and the optimistic log-space posterior.
//! - [`generators`]: policy generators (Q-type, V-type uniform / double sample / design)
//!   and the G-optimal design solver.
//! - [`driver`]: the online loop with regret accounting.
//! - [`analysis`]: effective dimension, empirical decoupling coefficients, the
//!   simulation-lemma residual and regret-bound evaluators.
//! - [`config`], [`instance`], [`commands`]: JSON configuration, instance generation and the
//!   `run` / `check` / `gen` subcommands behind the `mops` binary.
//!
//! Levels are 0-based inside the library (`0..horizon`); CSV and JSON outputs report the
//! 1-based `h_t` used in the algorithm listing.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod config;
pub mod design;
pub mod divergences;
pub mod driver;
pub mod env;
pub mod error;
pub mod generators;
pub mod instance;
pub mod planner;
pub mod posterior;
pub mod report;

pub use error::{Error, Result};

/// PRNG used everywhere a seed must reproduce bit-identical runs.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's seeded generator.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
