//! High-order strong numerical schemes for systems of Itô SDEs with
//! multidimensional non-commutative noise.
//!
//! The crate is layered bottom-up:
//!
//! * [`expr`] parses, differentiates, simplifies and compiles the model formulas;
//! * [`operators`] builds the operator superpositions each scheme needs;
//! * [`coeffs`] computes exact Fourier–Legendre coefficients and caches them;
//! * [`integrals`] approximates iterated Itô and Stratonovich integrals;
//! * [`accuracy`] picks truncation levels and evaluates approximation errors;
//! * [`schemes`] steps and simulates paths, ensembles and convergence studies;
//! * [`linear`] simulates linear stationary systems exactly in distribution;
//! * [`cli`] is the command-line front end.

pub mod accuracy;
pub mod cli;
pub mod coeffs;
pub mod expr;
pub mod integrals;
pub mod linear;
pub mod operators;
pub mod schemes;
