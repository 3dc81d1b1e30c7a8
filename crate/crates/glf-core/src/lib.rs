//! Self-supervised representation learning engine.
//!
//! The crate is organized around a small reverse-mode autodiff core
//! ([`autodiff`]), closed-form statistical kernels ([`stats`]), density-based
//! clustering ([`cluster`]), MLP encoders with SGD ([`model`]), the aligning
//! and constraining losses ([`loss`]), synthetic data generation ([`data`]),
//! and representation-quality evaluation ([`eval`]).

pub mod autodiff;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod rng;
pub mod stats;

pub use autodiff::{Tape, Tensor};
pub use error::{Error, Result};
