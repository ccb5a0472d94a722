//! Numerical laboratory for horocycle-flow experiments on the modular
//! surface: group flows and rescaled box charts, fundamental-domain
//! reduction and cusp-excursion statistics, the weight-12 cusp form with an
//! exact coefficient oracle, Fourier models of the irreducible
//! representation series with their transfer operators and invariant
//! distributions, twisted orbit integrals, close-return bookkeeping with
//! width functions, and sparse-time equidistribution experiments.
//!
//! Everything is deterministic: random draws are seeded, quadrature is
//! fixed-rule or budgeted-adaptive, and experiment outputs hash their own
//! configuration.

pub mod cusp;
pub mod error;
pub mod experiments;
pub mod group;
pub mod models;
pub mod quad;
pub mod returns;
pub mod sparse;
pub mod spectral;
pub mod surface;
pub mod twisted;

pub use error::{HoroError, Result};
