//! Numerical laboratory for average-expansion identities of SL(2,ℝ)
//! products composed with rotations, and their consequences for Lyapunov
//! exponents of linear cocycles and random matrix products.

pub mod cli;
pub mod cocycles;
pub mod complexify;
pub mod error;
pub mod formulas;
pub mod mat2;
pub mod quadrature;
pub mod randprod;

pub use error::{Error, Result};
pub use mat2::{diag_hyperbolic, product_chain, rotation, Mat2, PolarForm, ScaledProduct, Sl2};
pub use quadrature::{periodic_average, IntegralEstimate, QuadratureSpec};
