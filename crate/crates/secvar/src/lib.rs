//! Spectra, regularized determinants and traces of second-variation
//! operators of linear-quadratic optimal control problems on `[0, 1]`.

pub mod config;
pub mod error;
pub mod identities;
pub mod jacobi;
pub mod matfun;
pub mod model;
pub mod report;
pub mod selftest;
pub mod spectral;

pub use error::{Error, Result};
