//! Monte Carlo engine for interacting particle systems driven by idiosyncratic
//! Brownian motions and a common marked Poisson noise whose intensity depends
//! on the empirical law of the population.
//!
//! The crate is organised bottom-up:
//!
//! * [`noise`] – counter-based random streams split into a common and an
//!   idiosyncratic coordinate, Brownian paths and the dominating Poisson field.
//! * [`measure`] and [`wasserstein`] – uniform-atom empirical measures and W₂
//!   distances. Both are generic over the floating point type.
//! * [`poisson`] – intensity candidates, thinning and marked/compensated integrals.
//! * [`model`] – coefficient sets, the built-in systemic-risk and
//!   regime-switching models, and numerical validators for the standing
//!   Lipschitz/growth/moment conditions.
//! * [`integrator`] – Euler–Maruyama with exactly placed common jumps.
//! * [`chaos`] – synchronous-coupling experiments, conditional i.i.d. tests and
//!   the nonlinear Gronwall envelope.

pub mod chaos;
pub mod error;
pub mod integrator;
pub mod measure;
pub mod model;
pub mod noise;
pub mod poisson;
pub mod quadrature;
pub mod scalar;
pub mod stats;
pub mod wasserstein;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Empirical measure over `f64` atoms; the type used throughout the simulator.
pub type Measure = measure::EmpiricalMeasure<f64>;
/// Single-precision empirical measure.
pub type Measure32 = measure::EmpiricalMeasure<f32>;
/// Càdlàg measure-valued path over `f64` atoms.
pub type Path = measure::MeasurePath<f64>;
/// Single-precision measure path.
pub type Path32 = measure::MeasurePath<f32>;
