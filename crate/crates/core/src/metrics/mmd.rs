use rayon::prelude::*;

use crate::diffcore::Matrix;
use crate::error::{Error, Result};
use crate::objective::Quadrature;

/// Log-spaced Gaussian kernel bandwidths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelFamily {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub grid_size: usize,
}

impl Default for KernelFamily {
    fn default() -> Self {
        KernelFamily {
            sigma_min: 0.1,
            sigma_max: 20.0,
            grid_size: 64,
        }
    }
}

impl KernelFamily {
    pub fn sigmas(&self) -> Result<Vec<f64>> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::config(format!(
                "kernel family needs 0 < sigma_min < sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        match self.grid_size {
            0 => Err(Error::config("kernel family needs at least one bandwidth")),
            1 => Ok(vec![self.sigma_min]),
            g => {
                let (a, b) = (self.sigma_min.ln(), self.sigma_max.ln());
                let mut s: Vec<f64> = (0..g).map(|i| (a + (b - a) * i as f64 / (g - 1) as f64).exp()).collect();
                s[0] = self.sigma_min;
                s[g - 1] = self.sigma_max;
                Ok(s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmdResult {
    pub value: f64,
    pub argmax_sigma: f64,
}

/// `‖aᵢ − bⱼ‖²_q` for every row pair.
pub fn pairwise_sq_dists(a: &Matrix, b: &Matrix, q: &Quadrature) -> Result<Matrix> {
    if a.cols() != q.len() || b.cols() != q.len() {
        return Err(Error::dim("pairwise distances", q.len(), if a.cols() != q.len() { a.cols() } else { b.cols() }));
    }
    let w = &q.weights;
    let data: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let ai = a.row(i);
            (0..b.rows()).map(move |j| {
                ai.iter()
                    .zip(b.row(j))
                    .zip(w)
                    .map(|((x, y), w)| w * (x - y) * (x - y))
                    .sum::<f64>()
            })
        })
        .collect();
    Matrix::from_vec(a.rows(), b.rows(), data)
}

struct Dists {
    aa: Matrix,
    bb: Matrix,
    ab: Matrix,
}

impl Dists {
    fn new(a: &Matrix, b: &Matrix, q: &Quadrature) -> Result<Self> {
        if a.rows() == 0 || b.rows() == 0 {
            return Err(Error::Input("MMD needs two nonempty sample sets".into()));
        }
        Ok(Dists {
            aa: pairwise_sq_dists(a, a, q)?,
            bb: pairwise_sq_dists(b, b, q)?,
            ab: pairwise_sq_dists(a, b, q)?,
        })
    }

    fn mmd(&self, sigma: f64) -> f64 {
        let k = |d: &Matrix| {
            let s: f64 = d.data().iter().map(|v| (-v / (2.0 * sigma * sigma)).exp()).sum();
            s / d.data().len() as f64
        };
        (k(&self.aa) + k(&self.bb) - 2.0 * k(&self.ab)).max(0.0)
    }
}

/// Biased squared MMD with `k(x, y) = exp(−‖x − y‖²_q / (2σ²))`, floored at 0.
/// Pass a raw-sum quadrature for the plain Euclidean distance.
pub fn mmd(a: &Matrix, b: &Matrix, sigma: f64, q: &Quadrature) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::config(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    Ok(Dists::new(a, b, q)?.mmd(sigma))
}

/// Largest MMD over the family; ties go to the smaller bandwidth.
pub fn gmmd(a: &Matrix, b: &Matrix, fam: &KernelFamily, q: &Quadrature) -> Result<GmmdResult> {
    let sigmas = fam.sigmas()?;
    let d = Dists::new(a, b, q)?;
    let mut best = GmmdResult {
        value: f64::NEG_INFINITY,
        argmax_sigma: sigmas[0],
    };
    for s in sigmas {
        let v = d.mmd(s);
        if v > best.value {
            best = GmmdResult { value: v, argmax_sigma: s };
        }
    }
    Ok(best)
}
