//! Fredholm determinants, resonances, and scattering data for fourth-order
//! operators `∂⁴ + 2 ∂ p ∂ + q` on the half-line with the boundary
//! conditions `y(0) = y''(0) = 0` and compactly supported coefficients.

pub mod coeffs;
pub mod error;
pub mod fredholm;
pub mod kernels;
mod liouville;
pub mod oracle;
pub mod quad;
pub mod rootfind;
pub mod scattering;
pub mod traces;

pub use coeffs::{BeamCoeffs, CoeffPair, CompactCoeff, Piece};
pub use error::{Error, Result};
