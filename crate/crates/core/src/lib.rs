//! Spherical needlets (NPW and Mexican of order `p`), the exact covariance
//! structure of their random coefficients under isotropic Gaussian fields,
//! Monte Carlo simulation of such fields, and Hermite-polynomial statistics
//! built on normalized coefficients.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod cubature;
pub mod field;
pub mod harmonics;
pub mod kernels;
pub mod spectra;
pub mod stats;
mod error;
mod synthesis;

pub use correlation::{CorrelationQuery, CorrelationReport, Regime};
pub use cubature::CubatureGrid;
pub use error::{Error, ErrorClass};
pub use field::{CoefficientField, HarmonicCoefficients};
pub use harmonics::{HarmonicIndex, SphericalPoint};
pub use kernels::{NeedletKernel, SmhwProfile};
pub use spectra::PowerSpectrum;
