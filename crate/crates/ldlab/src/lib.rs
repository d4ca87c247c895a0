//! Numerical laboratory for large deviations of small-noise diffusions over
//! long time horizons.
//!
//! The crate simulates two families of controlled SDEs (a single-scale family
//! with drift `-psi/eps` and a slow-fast pair), evaluates the explicit rate
//! functions that govern their empirical and occupation measures, synthesizes
//! the travel/hold feedback controls that steer those measures onto prescribed
//! discrete targets, and runs Monte Carlo experiments against brute-forced
//! variational values of the Laplace principle.
//!
//! Module map:
//! - [`measures`]: finite discrete measures, space-time occupation measures,
//!   and the exact bounded-Lipschitz distance between them.
//! - [`models`]: coefficient bundles for both SDE families, noise schedules,
//!   built-in examples, and grid-certified assumption checkers.
//! - [`sde`]: seeded Euler-Maruyama engines with running cost ledgers.
//! - [`rate`]: the rate functionals `I1` and `I2` with minimal-norm control
//!   recovery.
//! - [`steering`]: single-scale travel/hold schedules and the feedback law
//!   that pins the empirical measure to a target.
//! - [`multiscale_control`]: the near-optimal plan pipeline (mollify,
//!   piecewise, discretize), partition hierarchy, and the fast-variable
//!   feedback control for slow-fast steering.
//! - [`lab`]: experiment orchestration, Laplace estimators, variational
//!   brute force, and sweeps.
//! - [`config`]: flat key-value experiment configuration.

pub mod config;
pub mod error;
pub mod lab;
pub mod measures;
pub mod models;
pub mod multiscale_control;
pub mod rate;
pub mod rng;
pub mod sde;
pub mod steering;

pub use error::{Error, Result};
