//! The VANO encoder/decoder pair, latent posterior and prior.

mod decoder;
mod encoder;

pub use decoder::{split_chunks, Decoder, DecoderKind, DecoderSpec};
pub use encoder::{Encoder, EncoderSpec, LOG_SIGMA_MAX, LOG_SIGMA_MIN};

use crate::diffcore::checkpoint::{Checkpoint, NamedTensor};
use crate::diffcore::{Activation, LayerInit, Matrix, ParamStore, RngStream, RwfInit, Tape, Var};
use crate::encodings::{Encoding, PeriodicEncoding, RffEncoding};
use crate::error::{Error, Result};

/// Diagonal Gaussian `N(μ, diag(exp(log σ))²)` over the latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl LatentGaussian {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }
}

/// `z = μ + σ ∘ ε`.
pub fn sample_latent(post: &LatentGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != post.dim() {
        return Err(Error::dim("sample_latent", post.dim(), eps.len()));
    }
    Ok(post
        .mu
        .iter()
        .zip(&post.log_sigma)
        .zip(eps)
        .map(|((m, l), e)| m + l.exp() * e)
        .collect())
}

/// Reparameterized draw on the tape. `mu` and `log_sigma` are `(B, n)`,
/// `eps` is `(B·S, n)` in example-major order; the result is `(B·S, n)`.
pub fn reparameterize(tape: &mut Tape, mu: Var, log_sigma: Var, eps: Matrix) -> Result<Var> {
    let (b, n) = tape.shape(mu);
    if eps.cols() != n || b == 0 || eps.rows() % b != 0 {
        return Err(Error::dim("reparameterize eps", b * n, eps.rows() * eps.cols()));
    }
    let samples = eps.rows() / b;
    let mu_rep = tape.repeat_rows(mu, samples);
    let ls_rep = tape.repeat_rows(log_sigma, samples);
    let sigma = tape.exp(ls_rep);
    let e = tape.constant(eps);
    let noise = tape.mul(sigma, e)?;
    tape.add(mu_rep, noise)
}

/// Standard normal prior on `ℝⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prior {
    pub dim: usize,
}

impl Prior {
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        rng.normals(self.dim)
    }

    pub fn sample_matrix(&self, count: usize, rng: &mut RngStream) -> Matrix {
        Matrix::from_vec(count, self.dim, rng.normals(count * self.dim)).expect("shape")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
}

impl ModelConfig {
    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ModelInit {
    pub seed: u64,
    pub rwf: Option<RwfInit>,
    pub zero_final_encoder: bool,
    pub zero_final_decoder: bool,
}

impl ModelInit {
    pub fn new(seed: u64) -> Self {
        ModelInit {
            seed,
            rwf: None,
            zero_final_encoder: false,
            zero_final_decoder: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Vano {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    rwf: bool,
}

impl Vano {
    pub fn new(store: &mut ParamStore, config: ModelConfig, init: &ModelInit) -> Result<Self> {
        if config.encoder.latent_dim != config.decoder.latent_dim {
            return Err(Error::config(format!(
                "encoder latent dim {} != decoder latent dim {}",
                config.encoder.latent_dim, config.decoder.latent_dim
            )));
        }
        let mut li = LayerInit::new(init.seed);
        li.rwf = init.rwf;
        let encoder = Encoder::new(store, config.encoder.clone(), &li, init.zero_final_encoder)?;
        let decoder = Decoder::new(store, config.decoder.clone(), &li, init.zero_final_decoder)?;
        Ok(Vano {
            config,
            encoder,
            decoder,
            rwf: init.rwf.is_some(),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    pub fn prior(&self) -> Prior {
        Prior {
            dim: self.latent_dim(),
        }
    }

    /// Architecture description stored alongside the weights in checkpoints.
    pub fn meta_tensors(&self) -> Vec<NamedTensor> {
        let e = &self.config.encoder;
        let d = &self.config.decoder;
        let hidden = |name: &str, h: &[usize]| NamedTensor {
            name: name.into(),
            shape: vec![h.len()],
            data: h.iter().map(|v| *v as f64).collect(),
        };
        let mut t = vec![
            NamedTensor::scalar("meta.latent_dim", e.latent_dim as f64),
            NamedTensor::scalar("meta.encoder.input_dim", e.input_dim as f64),
            hidden("meta.encoder.hidden", &e.hidden),
            NamedTensor::scalar("meta.encoder.activation", e.activation.code() as f64),
            NamedTensor::scalar("meta.decoder.kind", d.kind.code() as f64),
            hidden("meta.decoder.hidden", &d.hidden),
            NamedTensor::scalar("meta.decoder.activation", d.activation.code() as f64),
            NamedTensor::scalar("meta.decoder.output_activation", d.output_activation.code() as f64),
            NamedTensor::scalar("meta.rwf", if self.rwf { 1.0 } else { 0.0 }),
            NamedTensor::scalar("meta.encoding.coord_dim", d.encoding.coord_dim() as f64),
        ];
        match &d.encoding {
            Encoding::None { .. } => t.push(NamedTensor::scalar("meta.encoding.kind", 0.0)),
            Encoding::Periodic(p) => {
                t.push(NamedTensor::scalar("meta.encoding.kind", 1.0));
                t.push(NamedTensor::scalar("meta.encoding.harmonics", p.harmonics as f64));
                t.push(NamedTensor::scalar("meta.encoding.length", p.length));
                t.push(NamedTensor::scalar("meta.encoding.sin_only", if p.sin_only { 1.0 } else { 0.0 }));
            }
            Encoding::Rff(r) => {
                t.push(NamedTensor::scalar("meta.encoding.kind", 2.0));
                t.push(NamedTensor::scalar("meta.encoding.rff_sigma", r.sigma));
                t.push(NamedTensor {
                    name: "meta.encoding.rff_b".into(),
                    shape: vec![r.b.rows(), r.b.cols()],
                    data: r.b.data().to_vec(),
                });
            }
        }
        t
    }

    /// Rebuilds the model described by a checkpoint and loads its weights.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Vano, ParamStore)> {
        let int = |name: &str| -> Result<usize> { Ok(ck.scalar(name)? as usize) };
        let act = |name: &str| -> Result<Activation> {
            Activation::from_code(int(name)? as u32)
                .ok_or_else(|| Error::format(0, format!("bad activation code in {name}")))
        };
        let hidden = |name: &str| -> Result<Vec<usize>> {
            ck.get(name)
                .map(|t| t.data.iter().map(|v| *v as usize).collect())
                .ok_or_else(|| Error::format(0, format!("checkpoint is missing {name:?}")))
        };
        let latent = int("meta.latent_dim")?;
        let encoding = match int("meta.encoding.kind")? {
            0 => Encoding::None {
                coord_dim: int("meta.encoding.coord_dim")?,
            },
            1 => Encoding::Periodic(PeriodicEncoding::new(
                int("meta.encoding.harmonics")?,
                ck.scalar("meta.encoding.length")?,
                ck.scalar("meta.encoding.sin_only")? != 0.0,
            )?),
            2 => {
                let b = ck
                    .get("meta.encoding.rff_b")
                    .ok_or_else(|| Error::format(0, "checkpoint is missing the RFF matrix"))?;
                if b.shape.len() != 2 {
                    return Err(Error::format(0, "RFF matrix must be rank 2"));
                }
                Encoding::Rff(RffEncoding {
                    b: Matrix::from_vec(b.shape[0], b.shape[1], b.data.clone())?,
                    sigma: ck.scalar("meta.encoding.rff_sigma")?,
                })
            }
            k => return Err(Error::format(0, format!("unknown encoding kind {k}"))),
        };
        let config = ModelConfig {
            encoder: EncoderSpec {
                input_dim: int("meta.encoder.input_dim")?,
                hidden: hidden("meta.encoder.hidden")?,
                latent_dim: latent,
                activation: act("meta.encoder.activation")?,
            },
            decoder: DecoderSpec {
                kind: DecoderKind::from_code(int("meta.decoder.kind")? as u32)
                    .ok_or_else(|| Error::format(0, "bad decoder kind code"))?,
                encoding,
                hidden: hidden("meta.decoder.hidden")?,
                latent_dim: latent,
                activation: act("meta.decoder.activation")?,
                output_activation: act("meta.decoder.output_activation")?,
            },
        };
        let mut init = ModelInit::new(0);
        if ck.scalar("meta.rwf")? != 0.0 {
            init.rwf = Some(RwfInit::default());
        }
        let mut store = ParamStore::new();
        let model = Vano::new(&mut store, config, &init)?;
        ck.restore_params(&mut store)?;
        Ok((model, store))
    }
}
