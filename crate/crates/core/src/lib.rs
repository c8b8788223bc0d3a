//! Bayesian optimal experimental design by approximate coordinate exchange.
//!
//! The optimizer maximizes an approximation to the expected utility of an
//! `n x k` design over a bounded (possibly constrained) design space. Each
//! coordinate in turn gets a one-dimensional Gaussian-process emulator
//! fitted to a handful of utility evaluations; the emulator's predictive
//! mean is maximized over a fine grid, and the proposed exchange is vetted
//! by an acceptance test that is immune to emulator error. A second phase
//! consolidates clusters of nearly identical runs by point exchange.
//!
//! Expected utilities come in two flavors: stochastic evaluators that
//! return Monte Carlo utility draws (information gain, squared-error loss,
//! model discrimination, and bespoke utilities), and deterministic
//! evaluators backed by a radial-spherical quadrature rule for the
//! pseudo-Bayesian D- and A-criteria.

pub mod assess;
pub mod design;
pub mod emulator;
pub mod engine;
pub mod error;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod scenarios;
pub mod utility;

pub use design::{Design, DesignSpace};
pub use error::{Error, Result};
