//! Decoders: latent vector + query location → function value.
//!
//! * `Linear`: `D(z)(x) = Σᵢ zᵢ τᵢ(γ(x))`, one MLP emitting all `n` basis values.
//! * `Concat`: an MLP on `[z ‖ γ(x)]`.
//! * `SplitConcat`: `z` cut into one chunk per hidden layer; chunk `h` is
//!   appended to the input of hidden layer `h`, the first layer also sees `γ(x)`.
//!
//! The nonlinear variants split each injection weight by input block, so the
//! latent part is multiplied once per latent sample and the location part
//! once per query point before the two are broadcast together.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::{Activation, Dense, LayerInit, Matrix, Mlp, ParamStore, Tape, Var};
use crate::encodings::Encoding;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Linear,
    Concat,
    SplitConcat,
}

impl DecoderKind {
    pub fn code(self) -> u32 {
        match self {
            DecoderKind::Linear => 0,
            DecoderKind::Concat => 1,
            DecoderKind::SplitConcat => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Some(match c {
            0 => DecoderKind::Linear,
            1 => DecoderKind::Concat,
            2 => DecoderKind::SplitConcat,
            _ => return None,
        })
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::Linear => "linear",
            DecoderKind::Concat => "concat",
            DecoderKind::SplitConcat => "split_concat",
        })
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => DecoderKind::Linear,
            "concat" => DecoderKind::Concat,
            "split_concat" | "split-concat" => DecoderKind::SplitConcat,
            other => return Err(Error::config(format!("unknown decoder kind {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderSpec {
    pub kind: DecoderKind,
    pub encoding: Encoding,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    pub output_activation: Activation,
}

/// Contiguous latent chunks for `layers` injection points: `⌊n/H⌋` each, the
/// last chunk absorbing the remainder.
pub fn split_chunks(n: usize, layers: usize) -> Result<Vec<(usize, usize)>> {
    if layers == 0 {
        return Err(Error::config("split-concat decoder needs at least one hidden layer"));
    }
    if n < layers {
        return Err(Error::config(format!(
            "latent dim {n} cannot be split across {layers} hidden layers"
        )));
    }
    let size = n / layers;
    Ok((0..layers)
        .map(|h| {
            let start = h * size;
            let end = if h + 1 == layers { n } else { start + size };
            (start, end)
        })
        .collect())
}

#[derive(Clone, Debug)]
struct InjectedLayer {
    dense: Dense,
    /// Width of the previous hidden state feeding this layer (0 for the first).
    carried: usize,
    chunk: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
enum Body {
    Linear(Mlp),
    Injected {
        layers: Vec<InjectedLayer>,
        out: Dense,
    },
}

#[derive(Clone, Debug)]
pub struct Decoder {
    spec: DecoderSpec,
    body: Body,
}

/// Rows of `S·P` per chunk when decoding without gradients.
const EVAL_ROWS: usize = 1 << 16;

impl Decoder {
    pub fn new(store: &mut ParamStore, spec: DecoderSpec, init: &LayerInit, zero_final: bool) -> Result<Self> {
        let n = spec.latent_dim;
        if n == 0 {
            return Err(Error::config("decoder latent_dim must be >= 1"));
        }
        let e = spec.encoding.dim();
        let body = match spec.kind {
            DecoderKind::Linear => {
                let mut sizes = vec![e];
                sizes.extend(&spec.hidden);
                sizes.push(n);
                let mut li = *init;
                // Bias-free basis network over a boundary-vanishing encoding
                // keeps every basis function exactly zero on the boundary.
                if spec.encoding.vanishes_on_boundary() {
                    li.bias = false;
                }
                Body::Linear(Mlp::new(store, "decoder.basis", &sizes, spec.activation, Activation::Identity, &li, zero_final)?)
            }
            DecoderKind::Concat | DecoderKind::SplitConcat => {
                if spec.hidden.is_empty() {
                    return Err(Error::config(format!("{} decoder needs at least one hidden layer", spec.kind)));
                }
                let chunks = match spec.kind {
                    DecoderKind::Concat => {
                        let mut c = vec![None; spec.hidden.len()];
                        c[0] = Some((0, n));
                        c
                    }
                    _ => split_chunks(n, spec.hidden.len())?.into_iter().map(Some).collect(),
                };
                let mut layers = Vec::with_capacity(spec.hidden.len());
                let mut carried = 0;
                for (h, (&width, chunk)) in spec.hidden.iter().zip(chunks).enumerate() {
                    let chunk_w = chunk.map_or(0, |(a, b)| b - a);
                    let in_dim = if h == 0 { chunk_w + e } else { carried + chunk_w };
                    let dense = Dense::new(store, &format!("decoder.layer{h}"), in_dim, width, spec.activation, init)?;
                    layers.push(InjectedLayer { dense, carried, chunk });
                    carried = width;
                }
                let mut li = *init;
                li.zero_weight = zero_final;
                let out = Dense::new(store, "decoder.out", carried, 1, spec.output_activation, &li)?;
                Body::Injected { layers, out }
            }
        };
        Ok(Decoder { spec, body })
    }

    pub fn spec(&self) -> &DecoderSpec {
        &self.spec
    }

    pub fn kind(&self) -> DecoderKind {
        self.spec.kind
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    pub fn coord_dim(&self) -> usize {
        self.spec.encoding.coord_dim()
    }

    /// Encoded query points `(P, dim γ)` for flat point-major coordinates.
    pub fn features(&self, points: &[f64]) -> Result<Matrix> {
        self.spec.encoding.encode_points(points)
    }

    /// Basis values `τ(γ(x))` as a `(P, n)` matrix on the tape (linear only).
    pub fn basis(&self, tape: &mut Tape, store: &ParamStore, features: &Matrix) -> Result<Var> {
        match &self.body {
            Body::Linear(mlp) => {
                let g = tape.constant(features.clone());
                mlp.forward(tape, store, g)
            }
            Body::Injected { .. } => Err(Error::Unsupported(format!(
                "{} decoder has no basis functions",
                self.spec.kind
            ))),
        }
    }

    /// Decodes every latent row of `z` (`(S, n)`) at every encoded query
    /// point, returning an `(S, P)` matrix.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var, features: &Matrix) -> Result<Var> {
        let (s, n) = tape.shape(z);
        if n != self.spec.latent_dim {
            return Err(Error::dim("decoder latent", self.spec.latent_dim, n));
        }
        if features.cols() != self.spec.encoding.dim() {
            return Err(Error::dim("decoder features", self.spec.encoding.dim(), features.cols()));
        }
        let p = features.rows();
        match &self.body {
            Body::Linear(_) => {
                let t = self.basis(tape, store, features)?;
                let out = tape.matmul_nt(z, t)?;
                Ok(tape.activation(out, self.spec.output_activation))
            }
            Body::Injected { layers, out } => {
                let g = tape.constant(features.clone());
                let mut h: Option<Var> = None;
                for layer in layers {
                    let w = layer.dense.weight(tape, store)?;
                    let chunk_w = layer.chunk.map_or(0, |(a, b)| b - a);
                    let mut pre = match h {
                        None => {
                            // [z_chunk ‖ γ] · Wᵀ = z_chunk·W_zᵀ ⊕ γ·W_γᵀ
                            let (a, b) = layer.chunk.expect("first layer always receives a chunk");
                            let zc = tape.slice_cols(z, a, b)?;
                            let wz = tape.slice_cols(w, 0, chunk_w)?;
                            let wg = tape.slice_cols(w, chunk_w, chunk_w + features.cols())?;
                            let zpart = tape.matmul_nt(zc, wz)?;
                            let gpart = tape.matmul_nt(g, wg)?;
                            tape.outer_add(zpart, gpart)?
                        }
                        Some(prev) => {
                            let wh = tape.slice_cols(w, 0, layer.carried)?;
                            let mut acc = tape.matmul_nt(prev, wh)?;
                            if let Some((a, b)) = layer.chunk {
                                let zc = tape.slice_cols(z, a, b)?;
                                let wz = tape.slice_cols(w, layer.carried, layer.carried + chunk_w)?;
                                let zpart = tape.matmul_nt(zc, wz)?;
                                acc = tape.add_grouped(acc, zpart)?;
                            }
                            acc
                        }
                    };
                    if let Some(bias) = layer.dense.bias(tape, store) {
                        pre = tape.add_row(pre, bias)?;
                    }
                    h = Some(tape.activation(pre, layer.dense.activation()));
                }
                let y = out.forward(tape, store, h.expect("at least one hidden layer"))?;
                tape.reshape(y, s, p)
            }
        }
    }

    /// Gradient-free decoding of `zs` (`(S, n)`) at flat query points,
    /// processed in point chunks to bound memory. Returns `(S, P)`.
    pub fn decode_many(&self, store: &ParamStore, zs: &Matrix, points: &[f64]) -> Result<Matrix> {
        let d = self.coord_dim();
        if points.len() % d != 0 {
            return Err(Error::dim("decode_many points", d, points.len() % d));
        }
        if zs.cols() != self.spec.latent_dim {
            return Err(Error::dim("decode_many latent", self.spec.latent_dim, zs.cols()));
        }
        let p = points.len() / d;
        let s = zs.rows();
        let mut out = Matrix::zeros(s, p);
        if p == 0 || s == 0 {
            return Ok(out);
        }
        let chunk = match self.spec.kind {
            DecoderKind::Linear => p,
            _ => (EVAL_ROWS / s).clamp(1, p),
        };
        let mut start = 0;
        while start < p {
            let end = (start + chunk).min(p);
            let feats = self.features(&points[start * d..end * d])?;
            let mut tape = Tape::new();
            let z = tape.constant(zs.clone());
            let y = self.forward(&mut tape, store, z, &feats)?;
            let yv = tape.value(y);
            for i in 0..s {
                out.row_mut(i)[start..end].copy_from_slice(yv.row(i));
            }
            start = end;
        }
        Ok(out)
    }

    /// `D(z)` evaluated at flat, point-major query coordinates.
    pub fn decode_field(&self, store: &ParamStore, z: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        let zs = Matrix::row_vector(z.to_vec());
        Ok(self.decode_many(store, &zs, points)?.into_vec())
    }

    fn decode_point(&self, store: &ParamStore, z: &[f64], x: &[f64], want: DecoderKind) -> Result<f64> {
        if self.spec.kind != want {
            return Err(Error::Contract(format!("decoder is {}, not {want}", self.spec.kind)));
        }
        if x.len() != self.coord_dim() {
            return Err(Error::dim("query point", self.coord_dim(), x.len()));
        }
        if z.len() != self.spec.latent_dim {
            return Err(Error::dim("latent", self.spec.latent_dim, z.len()));
        }
        Ok(self.decode_field(store, z, x)?[0])
    }

    pub fn decode_linear(&self, store: &ParamStore, z: &[f64], x: &[f64]) -> Result<f64> {
        self.decode_point(store, z, x, DecoderKind::Linear)
    }

    pub fn decode_concat(&self, store: &ParamStore, z: &[f64], x: &[f64]) -> Result<f64> {
        self.decode_point(store, z, x, DecoderKind::Concat)
    }

    pub fn decode_split_concat(&self, store: &ParamStore, z: &[f64], x: &[f64]) -> Result<f64> {
        self.decode_point(store, z, x, DecoderKind::SplitConcat)
    }

    /// Basis functions evaluated at the points, `(P, n)` (linear only).
    pub fn basis_values(&self, store: &ParamStore, points: &[f64]) -> Result<Matrix> {
        let feats = self.features(points)?;
        let mut tape = Tape::new();
        let t = self.basis(&mut tape, store, &feats)?;
        Ok(tape.value(t).clone())
    }
}
