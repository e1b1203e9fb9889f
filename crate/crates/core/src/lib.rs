//! Desk-scale numerical laboratory for slow-fast evolution equations driven by
//! two fractional Brownian motions.
//!
//! The crate builds, bottom up:
//!
//! * [`spectral`] — finite spectral truncation, diagonal semigroups, Hölder norms;
//! * [`noise`] — exact sampling of trace-class fractional Brownian motion,
//!   shift and time-scaling operators;
//! * [`integral`] — Weyl fractional derivatives and the pathwise (Zähle)
//!   stochastic integral, with a Riemann-Stieltjes oracle;
//! * [`ou`] — fractional Ornstein-Uhlenbeck processes, stationary solutions and
//!   their scaling identities;
//! * [`fixed_point`] — pullback computation of the exponentially attracting
//!   random fixed point of the frozen fast dynamics;
//! * [`solver`] — exponential-Euler mild solver for the coupled system, the
//!   contraction-operator cross-check, and a-priori bound diagnostics;
//! * [`averaging`] — the averaged drift, Khasminskii auxiliary processes and
//!   the almost-sure averaging convergence experiment;
//! * [`validation`] — the one-shot acceptance suite wired into the CLI.
//!
//! Everything is deterministic given a master seed: randomness flows through
//! counter-based substreams, and ensembles are embarrassingly parallel.

pub mod averaging;
pub mod error;
pub mod fixed_point;
pub mod integral;
pub mod noise;
pub mod ou;
pub mod solver;
pub mod spectral;
pub mod util;
pub mod validation;

pub use error::{Error, Result};
pub use spectral::{DiagonalOperator, GridFunction, HolderParams, SpectralVector};
