//! Isotropic 2D Gaussian bumps on `[0, 1]²`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use super::{unit_grid, Dataset};
use crate::diffcore::rng::{Purpose, RngStream};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BumpsParams {
    pub n_samples: usize,
    /// Points per axis; the grid has `side²` points.
    pub side: usize,
    /// Use the bivariate normalization `(2π)⁻¹` instead of `(2π)^(−1/2)`.
    pub standard_normalization: bool,
}

impl Default for BumpsParams {
    fn default() -> Self {
        BumpsParams {
            n_samples: 2048,
            side: 48,
            standard_normalization: false,
        }
    }
}

/// Per-sample parameters: centre `μ ~ U(0,1)²` and variance
/// `σ ~ U(0, 0.1) + 0.01`.
pub(crate) fn draw_bump(seed: u64, k: usize) -> ([f64; 2], f64) {
    let mut rng = RngStream::new(seed, Purpose::Data, k as u64);
    let mu = [rng.uniform(), rng.uniform()];
    let sigma = 0.1 * rng.uniform() + 0.01;
    (mu, sigma)
}

/// `U(x) = c · σ⁻¹ · exp(−|x − μ|² / (2σ))` with `c = (2π)^(−1/2)`, or
/// `(2π)⁻¹` under standard normalization. Grid point `p = i·side + j` sits
/// at `(xᵢ, yⱼ)`.
pub fn sample_bumps(p: &BumpsParams, seed: u64) -> Result<Dataset> {
    if p.side < 2 {
        return Err(Error::config(format!("bumps grid needs side >= 2, got {}", p.side)));
    }
    let axis = unit_grid(p.side);
    let grid: Vec<f64> = axis
        .iter()
        .flat_map(|x| axis.iter().flat_map(move |y| [*x, *y]))
        .collect();
    let norm = if p.standard_normalization {
        1.0 / TAU
    } else {
        1.0 / (2.0 * PI).sqrt()
    };
    let rows: Vec<Vec<f64>> = (0..p.n_samples)
        .into_par_iter()
        .map(|k| {
            let (mu, sigma) = draw_bump(seed, k);
            grid.chunks_exact(2)
                .map(|pt| {
                    let r2 = (pt[0] - mu[0]).powi(2) + (pt[1] - mu[1]).powi(2);
                    norm / sigma * (-0.5 * r2 / sigma).exp()
                })
                .collect()
        })
        .collect();
    let provenance = serde_json::json!({
        "generator": "bumps",
        "seed": seed,
        "side": p.side,
        "n": p.n_samples,
        "standard_normalization": p.standard_normalization,
    })
    .to_string();
    let m = p.side * p.side;
    Dataset::new(
        2,
        vec![(0.0, 1.0), (0.0, 1.0)],
        grid,
        Matrix::from_vec(p.n_samples, m, rows.concat())?,
        provenance,
    )
}
