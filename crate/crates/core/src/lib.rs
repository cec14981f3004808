//! Numerical kernels for complex Monge-Ampere type equations
//! `(omega + ddc(phi))^n = e^{lambda phi} f omega^n`
//! on the periodic complex torus in dimension n = 1, 2.
//!
//! Everything is discretized on an equispaced periodic grid with spectral
//! differentiation, so band-limited data is handled exactly and the
//! inequality diagnostics are not confounded by discretization error.
//! All grid reductions are order-fixed: identical inputs give bit-identical
//! results regardless of the worker-thread count.

pub mod builders;
pub mod diag;
pub mod error;
pub mod field;
pub mod flow;
pub mod form;
pub mod grid;
pub mod herm;
pub mod io;
pub mod ma;
pub mod random;
pub mod solve;
pub mod spectral;

pub use error::{CmaError, Result};
pub use field::{ScalarField, TopDensity};
pub use form::Form11;
pub use grid::GridSpec;
pub use spectral::Spectral;
