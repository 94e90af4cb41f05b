//! Stability toolkit for viscous shock profiles of parabolic conservation laws.

pub mod cli;
pub mod config;
pub mod error;
pub mod evolve;
pub mod lemma_verify;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod profile;
pub mod quadrature;
pub mod spectral;
pub mod templates;

pub use error::{Error, Result};
