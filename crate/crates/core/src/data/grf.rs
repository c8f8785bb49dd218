//! Gaussian random fields on `[0, 1]` with zero boundary values, sampled by a
//! truncated Karhunen–Loève expansion in the sine basis.

use std::f64::consts::{SQRT_2, TAU};

use rayon::prelude::*;

use super::{unit_grid, Dataset};
use crate::diffcore::rng::{Purpose, RngStream};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GRFParams {
    pub alpha: f64,
    pub tau: f64,
    pub n_eig: usize,
    pub m: usize,
    pub n_samples: usize,
}

impl Default for GRFParams {
    fn default() -> Self {
        GRFParams {
            alpha: 2.0,
            tau: 3.0,
            n_eig: 32,
            m: 128,
            n_samples: 2048,
        }
    }
}

impl GRFParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must exceed 1/2, got {}", self.alpha)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.n_eig == 0 {
            return Err(Error::config("n_eig must be >= 1"));
        }
        if self.m < 2 {
            return Err(Error::config(format!("grid needs m >= 2, got {}", self.m)));
        }
        Ok(())
    }
}

/// Eigenpair `λᵢ = ((2πi)² + τ²)^(−α)`, `φᵢ(x) = √2 sin(2πix)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrfMode {
    pub index: usize,
    pub lambda: f64,
}

impl GrfMode {
    /// The phase is reduced mod 1 first, so `φᵢ(0) = φᵢ(1) = 0` exactly.
    pub fn phi(&self, x: f64) -> f64 {
        SQRT_2 * (TAU * (self.index as f64 * x).rem_euclid(1.0)).sin()
    }
}

pub fn grf_eigpair(i: usize, p: &GRFParams) -> Result<GrfMode> {
    if i < 1 {
        return Err(Error::Input("eigenpair index starts at 1".into()));
    }
    let k = TAU * i as f64;
    Ok(GrfMode {
        index: i,
        lambda: (k * k + p.tau * p.tau).powf(-p.alpha),
    })
}

/// `N` draws of `Σᵢ ξᵢ √λᵢ φᵢ` on the endpoint-inclusive `m`-point grid.
/// Sample `k` uses its own data stream, so its coefficients do not depend
/// on `m` or `N`.
pub fn sample_grf(p: &GRFParams, seed: u64) -> Result<Dataset> {
    p.validate()?;
    let grid = unit_grid(p.m);
    let modes: Vec<GrfMode> = (1..=p.n_eig).map(|i| grf_eigpair(i, p)).collect::<Result<_>>()?;
    // (n_eig, m) table of √λᵢ φᵢ(xⱼ)
    let table: Vec<Vec<f64>> = modes
        .iter()
        .map(|md| grid.iter().map(|x| md.lambda.sqrt() * md.phi(*x)).collect())
        .collect();
    let rows: Vec<Vec<f64>> = (0..p.n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(seed, Purpose::Data, k as u64);
            let xi = rng.normals(p.n_eig);
            let mut u = vec![0.0; p.m];
            for (x, row) in xi.iter().zip(&table) {
                for (o, v) in u.iter_mut().zip(row) {
                    *o += x * v;
                }
            }
            u
        })
        .collect();
    let provenance = serde_json::json!({
        "generator": "grf",
        "seed": seed,
        "alpha": p.alpha,
        "tau": p.tau,
        "n_eig": p.n_eig,
        "m": p.m,
        "n": p.n_samples,
    })
    .to_string();
    Dataset::new(
        1,
        vec![(0.0, 1.0)],
        grid,
        Matrix::from_vec(p.n_samples, p.m, rows.concat())?,
        provenance,
    )
}
