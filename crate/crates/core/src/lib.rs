//! Numerical toolkit for area-preserving planar dynamics: dynamically
//! defined Cantor sets and their lateral thickness, Hausdorff-dimension
//! lower bounds, the quadratic/Henon map families and their rescaled
//! near-identity form, Birkhoff normal forms, separatrix-splitting
//! measurement, first-return horseshoe certification, and standard-map
//! experiments.
//!
//! Core numerics are generic over the scalar type via [`Real`]; `f64` is
//! the default working scalar and [`X128`] provides a 128-bit-significand
//! software float for regimes where doubles cannot resolve the
//! exponentially small quantities involved.

pub mod cantor;
pub mod error;
pub mod fit;
pub mod horseshoe;
pub mod jet;
pub mod manifold;
pub mod maps;
pub mod normalform;
pub mod poly2;
pub mod real;
pub mod separatrix;
pub mod stdmap;
pub mod vec2;

pub use error::CoreError;
pub use real::{Real, X128};
pub use vec2::{Mat2, Vec2};

/// Default working scalar.
pub type Scalar = f64;
/// Extended-precision scalar (128-bit significand).
pub type ScalarX = X128;

/// Significand width of the default scalar, in bits.
pub const NATIVE_BITS: u32 = 53;
/// Significand width of the extended scalar, in bits.
pub const EXTENDED_BITS: u32 = 128;
