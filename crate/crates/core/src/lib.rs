//! Particle approximations of aggregation equations with singular kernels:
//! kernels, discrete measures, particle dynamics, optimal transport distances,
//! error envelopes and the numerical studies built on them.

pub mod error;
pub mod diagnostics;
pub mod dynamics;
pub mod experiments;
pub mod exponent;
pub mod kernels;
pub mod measures;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use exponent::Exponent;
