//! Numerical audit toolkit for uncertainty principles with error term and
//! observability of Gelfand-Shilov smoothing semigroups.
//!
//! Functions are finite Hermite expansions ([`spectral::SpectralFunction`]),
//! so derivatives and coordinate multiplications are exact and only the
//! non-polynomial weights and region restrictions go through quadrature.

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kovrijkine;
pub mod observability;
pub mod quadrature;
pub mod semigroup;
pub mod spectral;
pub mod theorems;

pub use error::{Error, Result};
pub use spectral::SpectralFunction;
