//! Discovery of sparse governing equations of dynamical systems with
//! complex-valued product-unit networks.
//!
//! A product unit computes a generalized monomial `x_1^{w_1} ... x_n^{w_n}`
//! with learnable, possibly complex exponents, realized as an exponential of
//! a weighted sum of principal-branch logarithms. A single layer of such
//! units feeding a complex linear layer can represent a sparse sum of
//! monomials per output, which is enough to write down the right-hand side
//! of systems like Lorenz63 exactly. The crate trains these models on
//! trajectory data, extracts and matches symbolic terms, scores forecast
//! stability via the effective prediction time, and forecasts measured
//! signals through a time-delay embedding.
//!
//! The `pundit` binary exposes the full pipeline; see the module docs and
//! the README for the file formats.

pub mod cli;
pub mod complex;
pub mod discovery;
pub mod dynamics;
pub mod evaluation;
pub mod network;
pub mod signal;
pub mod training;

pub use complex::ComplexScalar;
pub use network::ProductUnitModel;
