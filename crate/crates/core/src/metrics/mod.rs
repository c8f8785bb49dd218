//! Distances between distributions of functions.

mod circular;
mod covariance;
mod mmd;

pub use circular::{circular_stats, CircularStats};
pub use covariance::{
    covariance_analytic, covariance_model_linear, empirical_covariance, hs_error, CovarianceMatrix,
};
pub use mmd::{gmmd, mmd, pairwise_sq_dists, GmmdResult, KernelFamily};
