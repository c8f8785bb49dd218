use crate::data::{grf_eigpair, GRFParams};
use crate::diffcore::matrix::matmul;
use crate::diffcore::{Matrix, ParamStore};
use crate::error::{Error, Result};
use crate::model::{Decoder, DecoderKind};

/// Covariance operator discretized on a grid, `m × m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    pub c: Matrix,
}

impl CovarianceMatrix {
    pub fn size(&self) -> usize {
        self.c.rows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.size()).map(|i| self.c.get(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.c.data().iter().map(|v| v * v).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                worst = worst.max((self.c.get(i, j) - self.c.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `Σᵢ λᵢ φᵢ(x) φᵢ(x')` over the truncated spectrum, on 1D grid points.
pub fn covariance_analytic(p: &GRFParams, grid: &[f64]) -> Result<CovarianceMatrix> {
    p.validate()?;
    let m = grid.len();
    let mut c = Matrix::zeros(m, m);
    for i in 1..=p.n_eig {
        let md = grf_eigpair(i, p)?;
        // √λ·φ on both sides keeps every entry bitwise symmetric.
        let root = md.lambda.sqrt();
        let psi: Vec<f64> = grid.iter().map(|x| root * md.phi(*x)).collect();
        for a in 0..m {
            let pa = psi[a];
            for (o, pb) in c.row_mut(a).iter_mut().zip(&psi) {
                *o += pa * pb;
            }
        }
    }
    Ok(CovarianceMatrix { c })
}

/// `Σᵢ τᵢ τᵢᵀ` where `τᵢ = D(eᵢ)` is the i-th basis function of a linear
/// decoder evaluated at the (flat, point-major) grid.
pub fn covariance_model_linear(dec: &Decoder, store: &ParamStore, grid: &[f64]) -> Result<CovarianceMatrix> {
    if dec.kind() != DecoderKind::Linear {
        return Err(Error::Unsupported(format!(
            "model covariance needs a linear decoder, got {}",
            dec.kind()
        )));
    }
    let n = dec.latent_dim();
    let mut eye = Matrix::zeros(n, n);
    for i in 0..n {
        eye.set(i, i, 1.0);
    }
    let tau = dec.decode_many(store, &eye, grid)?; // (n, m)
    Ok(CovarianceMatrix {
        c: matmul(&tau.transpose(), &tau)?,
    })
}

/// Sample covariance `(1/N) Σ (u − ū)(u − ū)ᵀ` of the rows of `values`.
pub fn empirical_covariance(values: &Matrix) -> Result<CovarianceMatrix> {
    let (n, m) = values.shape();
    if n == 0 {
        return Err(Error::Input("empirical covariance of an empty set".into()));
    }
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (a, v) in mean.iter_mut().zip(values.row(i)) {
            *a += v / n as f64;
        }
    }
    let mut centered = values.clone();
    for i in 0..n {
        for (v, mu) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let mut c = matmul(&centered.transpose(), &centered)?;
    c.data_mut().iter_mut().for_each(|v| *v /= n as f64);
    Ok(CovarianceMatrix { c })
}

/// `‖C − Ĉ‖²_F / ‖C‖²_F`.
pub fn hs_error(c: &CovarianceMatrix, c_hat: &CovarianceMatrix) -> Result<f64> {
    if c.c.shape() != c_hat.c.shape() {
        return Err(Error::dim("hs_error", c.size(), c_hat.size()));
    }
    let denom = c.frobenius_sq();
    if denom == 0.0 {
        return Err(Error::Input("reference covariance has zero norm".into()));
    }
    let num: f64 = c
        .c
        .data()
        .iter()
        .zip(c_hat.c.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / denom)
}
