use crate::diffcore::{Activation, LayerInit, Matrix, Mlp, ParamStore, Tape, Var};
use crate::error::{Error, Result};

use super::LatentGaussian;

/// Bounds applied to the encoder's log standard deviations.
pub const LOG_SIGMA_MIN: f64 = -10.0;
pub const LOG_SIGMA_MAX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    /// Number of measurements per function (times channels).
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
}

/// MLP from raw measurements to `(μ, log σ)`.
#[derive(Clone, Debug)]
pub struct Encoder {
    spec: EncoderSpec,
    mlp: Mlp,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, spec: EncoderSpec, init: &LayerInit, zero_final: bool) -> Result<Self> {
        if spec.latent_dim == 0 || spec.input_dim == 0 {
            return Err(Error::config("encoder needs input_dim >= 1 and latent_dim >= 1"));
        }
        let mut sizes = vec![spec.input_dim];
        sizes.extend(&spec.hidden);
        sizes.push(2 * spec.latent_dim);
        let mlp = Mlp::new(store, "encoder", &sizes, spec.activation, Activation::Identity, init, zero_final)?;
        Ok(Encoder { spec, mlp })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    /// Batched forward pass on a `(B, input_dim)` measurement matrix.
    /// Returns `(μ, log σ)`, each `(B, n)`, with log σ clamped to
    /// `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, u: Var) -> Result<(Var, Var)> {
        let n = self.spec.latent_dim;
        let out = self.mlp.forward(tape, store, u)?;
        let mu = tape.slice_cols(out, 0, n)?;
        let raw = tape.slice_cols(out, n, 2 * n)?;
        let log_sigma = tape.clamp(raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX);
        debug_assert!(tape
            .value(log_sigma)
            .data()
            .iter()
            .all(|v| (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(v) || v.is_nan()));
        Ok((mu, log_sigma))
    }

    pub fn encode(&self, store: &ParamStore, u_values: &[f64]) -> Result<LatentGaussian> {
        if u_values.len() != self.spec.input_dim {
            return Err(Error::dim("encode", self.spec.input_dim, u_values.len()));
        }
        if let Some(i) = u_values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("measurement {i} is not finite")));
        }
        let mut tape = Tape::new();
        let u = tape.constant(Matrix::row_vector(u_values.to_vec()));
        let (mu, ls) = self.forward(&mut tape, store, u)?;
        Ok(LatentGaussian {
            mu: tape.value(mu).data().to_vec(),
            log_sigma: tape.value(ls).data().to_vec(),
        })
    }

    /// Posterior for every row of a `(B, input_dim)` batch.
    pub fn encode_batch(&self, store: &ParamStore, u: &Matrix) -> Result<Vec<LatentGaussian>> {
        if u.cols() != self.spec.input_dim {
            return Err(Error::dim("encode_batch", self.spec.input_dim, u.cols()));
        }
        if u.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite measurement in batch".into()));
        }
        let mut tape = Tape::new();
        let uv = tape.constant(u.clone());
        let (mu, ls) = self.forward(&mut tape, store, uv)?;
        let (mu, ls) = (tape.value(mu), tape.value(ls));
        Ok((0..u.rows())
            .map(|i| LatentGaussian {
                mu: mu.row(i).to_vec(),
                log_sigma: ls.row(i).to_vec(),
            })
            .collect())
    }
}
