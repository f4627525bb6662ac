//! Interacting particle diffusions with logarithmic repulsion at general
//! inverse temperature, and the analytic machinery describing their global
//! fluctuations.
//!
//! The crate has three layers:
//!
//! * [`measures`] and [`flow`] hold the deterministic analytics: initial
//!   particle distributions, their Stieltjes transforms, and the
//!   characteristic flow that transports them in time.
//! * [`theory`] evaluates closed-form mean and covariance formulas for
//!   linear statistics of the centered empirical measure, including contour
//!   and combinatorial variance routes that cross-check each other.
//! * [`sim`] and [`harness`] provide a seeded Euler–Maruyama simulator for
//!   the particle system, Monte Carlo estimation with error bars, and an
//!   independent tridiagonal equilibrium sampler.

pub mod error;
pub mod flow;
pub mod harness;
pub mod measures;
pub mod rng;
pub mod sim;
pub mod theory;

pub use error::{Error, Result};
pub use flow::{FlowMap, Jet};
pub use measures::{Measure, SignedMeasure};
pub use theory::{FluctQuery, QueryEntry, TheoryResult};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
