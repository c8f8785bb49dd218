//! Variational autoencoding neural operators.
//!
//! A VANO encodes point-wise measurements of a function into a diagonal
//! Gaussian over a finite latent space and decodes latent samples into
//! functions that can be queried anywhere in the domain. Training maximizes
//! a functional ELBO whose likelihood term is the white-noise
//! Cameron–Martin log-density, approximated by quadrature on the
//! measurement grid.

pub mod data;
pub mod diffcore;
pub mod encodings;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod train;

pub use error::{Error, Result};
