//! Numerical laboratory for the anisotropic doubly critical p-Laplace
//! equation `-Δ_p^H u - γ u^{p-1}/H°(x)^p = u^{p*-1}`.

pub mod comparison;
pub mod error;
pub mod gauge;
pub mod inequalities;
pub mod radial;
pub mod sampling;
pub mod spectrum;
pub mod variational;

pub use error::{Error, Result};
