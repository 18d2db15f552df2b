//! Semiclassical resonances and widths for 2x2 one-dimensional Schrödinger
//! systems whose classical trajectories cross, possibly tangentially.
//!
//! Pipeline: [`exprs`] parses the potentials, [`model`] validates the
//! geometry, [`geometry`] builds the phase-space graph, [`quadrature`]
//! supplies actions, [`semiclassics`] computes pseudo-resonances and width
//! coefficients, and [`oracle`] solves the full system directly for
//! comparison. [`cli`] ties these together behind a config file.

pub mod cli;
pub mod exprs;
pub mod geometry;
pub mod quadrature;
pub mod semiclassics;
pub mod model;
pub mod oracle;
mod roots;
pub mod scalar;

pub use num_complex::Complex;
pub use scalar::{DomainError, Jet, Scalar};

/// Double-precision complex number used throughout the numerical core.
pub type C64 = Complex<f64>;
/// Single-precision complex number.
pub type C32 = Complex<f32>;
/// Taylor jet over `f64`.
pub type Jet64 = Jet<f64>;
/// Taylor jet over `f32`.
pub type Jet32 = Jet<f32>;
