//! Functional ELBO with a white-noise Gaussian likelihood.
//!
//! For a decoded function `d = D(z)` and data `u`, both sampled at quadrature
//! points, the log-likelihood is `−½‖d‖²_q + ⟨d, u⟩_q` and the per-example
//! loss is `scale·E_q[½‖d‖²_q − ⟨d, u⟩_q] + β·KL(q(z|u) ‖ N(0, I))`.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::tape::kl_row;
use crate::diffcore::{Matrix, ParamStore, RngStream, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{reparameterize, LatentGaussian, Vano};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuadratureMode {
    /// `wᵢ = |X|/m`, consistent across resolutions.
    #[default]
    Weighted,
    /// `wᵢ = 1`.
    RawSum,
}

impl fmt::Display for QuadratureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadratureMode::Weighted => "weighted",
            QuadratureMode::RawSum => "raw_sum",
        })
    }
}

impl FromStr for QuadratureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(QuadratureMode::Weighted),
            "raw_sum" | "raw-sum" => Ok(QuadratureMode::RawSum),
            other => Err(Error::config(format!("unknown quadrature mode {other:?}"))),
        }
    }
}

/// Quadrature rule on a set of points: flat point-major coordinates plus one
/// positive weight per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    pub points: Vec<f64>,
    pub coord_dim: usize,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(points: Vec<f64>, coord_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if coord_dim == 0 || points.len() != weights.len() * coord_dim {
            return Err(Error::dim("quadrature points", weights.len() * coord_dim, points.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::config(format!("quadrature weights must be positive, got {w}")));
        }
        Ok(Quadrature {
            points,
            coord_dim,
            weights,
        })
    }

    /// Equal weights summing to `measure` (weighted) or all ones (raw sum).
    pub fn uniform(points: Vec<f64>, coord_dim: usize, measure: f64, mode: QuadratureMode) -> Result<Self> {
        if coord_dim == 0 || points.len() % coord_dim != 0 {
            return Err(Error::dim("quadrature points", coord_dim, points.len()));
        }
        let m = points.len() / coord_dim;
        let w = match mode {
            QuadratureMode::Weighted => measure / m as f64,
            QuadratureMode::RawSum => 1.0,
        };
        Quadrature::new(points, coord_dim, vec![w; m])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn check(&self, what: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::dim(what, self.len(), v.len()));
        }
        Ok(())
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check("quadrature inner lhs", a)?;
        self.check("quadrature inner rhs", b)?;
        Ok(self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum())
    }

    pub fn norm_sq(&self, a: &[f64]) -> Result<f64> {
        self.inner(a, a)
    }

    /// Quadrature restricted to `indices`, re-weighted with `mode` over the
    /// same domain measure.
    pub fn subset(&self, indices: &[usize], measure: f64, mode: QuadratureMode) -> Result<Quadrature> {
        let d = self.coord_dim;
        let mut pts = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Input(format!("quadrature index {i} out of range {}", self.len())));
            }
            pts.extend_from_slice(&self.points[i * d..(i + 1) * d]);
        }
        Quadrature::uniform(pts, d, measure, mode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ELBOConfig {
    pub beta: f64,
    pub mc_samples: usize,
    /// Scale each example's reconstruction term by `rescale_reference / ‖u‖²_q`.
    pub norm_rescale: bool,
    /// Numerator of the rescaling factor; 1 gives `1/‖u‖²_q`.
    pub rescale_reference: f64,
    pub quadrature_mode: QuadratureMode,
}

impl Default for ELBOConfig {
    fn default() -> Self {
        ELBOConfig {
            beta: 1.0,
            mc_samples: 1,
            norm_rescale: false,
            rescale_reference: 1.0,
            quadrature_mode: QuadratureMode::Weighted,
        }
    }
}

impl ELBOConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 1 {
            return Err(Error::config("mc_samples must be >= 1"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.rescale_reference > 0.0 && self.rescale_reference.is_finite()) {
            return Err(Error::config(format!(
                "rescale_reference must be positive, got {}",
                self.rescale_reference
            )));
        }
        Ok(())
    }
}

/// Batch losses. `per_example` holds `(recon, kl)` where `recon` already
/// includes the norm-rescaling factor, so `total = mean(recon + β·kl)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub per_example: Vec<(f64, f64)>,
}

/// `−½Σwᵢdᵢ² + Σwᵢdᵢuᵢ`.
pub fn white_noise_loglik(d_vals: &[f64], u_vals: &[f64], q: &Quadrature) -> Result<f64> {
    q.check("white_noise_loglik decoded values", d_vals)?;
    q.check("white_noise_loglik data values", u_vals)?;
    Ok(q
        .weights
        .iter()
        .zip(d_vals)
        .zip(u_vals)
        .map(|((w, d), u)| w * (u * d - 0.5 * d * d))
        .sum())
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))` in closed form.
pub fn kl_gaussian(post: &LatentGaussian) -> f64 {
    kl_row(&post.mu, &post.log_sigma)
}

struct Graph {
    loss: Var,
    recon: Var,
    kl: Var,
}

fn build_graph(
    tape: &mut Tape,
    model: &Vano,
    store: &ParamStore,
    inputs: &Matrix,
    targets: &Matrix,
    q: &Quadrature,
    cfg: &ELBOConfig,
    rng: &mut RngStream,
) -> Result<Graph> {
    cfg.validate()?;
    let b = inputs.rows();
    if b == 0 {
        return Err(Error::config("empty batch"));
    }
    if targets.rows() != b {
        return Err(Error::dim("elbo targets", b, targets.rows()));
    }
    if targets.cols() != q.len() {
        return Err(Error::dim("elbo targets vs quadrature", q.len(), targets.cols()));
    }
    if q.coord_dim != model.decoder.coord_dim() {
        return Err(Error::dim("quadrature coord_dim", model.decoder.coord_dim(), q.coord_dim));
    }
    let s = cfg.mc_samples;
    let n = model.latent_dim();

    let scales = if cfg.norm_rescale {
        (0..b)
            .map(|i| {
                let ns = q.norm_sq(targets.row(i))?;
                if ns > 0.0 && ns.is_finite() {
                    Ok(cfg.rescale_reference / ns)
                } else {
                    Err(Error::Input(format!("example {i} has norm {ns}, cannot rescale")))
                }
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![1.0; b]
    };

    let u = tape.constant(inputs.clone());
    let (mu, log_sigma) = model.encoder.forward(tape, store, u)?;
    let eps = Matrix::from_vec(b * s, n, rng.normals(b * s * n))?;
    let z = reparameterize(tape, mu, log_sigma, eps)?;

    let features = model.decoder.features(&q.points)?;
    let d = model.decoder.forward(tape, store, z, &features)?;

    let mut rep = Matrix::zeros(b * s, q.len());
    for i in 0..b {
        for k in 0..s {
            rep.row_mut(i * s + k).copy_from_slice(targets.row(i));
        }
    }
    let per_sample = tape.white_noise_recon(d, rep, q.weights.clone())?;
    let recon = tape.group_mean(per_sample, s)?;
    let recon = tape.mul_const_rows(recon, scales)?;
    let kl = tape.kl_diag(mu, log_sigma)?;
    let weighted_kl = tape.scale(kl, cfg.beta);
    let per_example = tape.add(recon, weighted_kl)?;
    let loss = tape.mean(per_example);
    Ok(Graph { loss, recon, kl })
}

fn report(tape: &Tape, g: &Graph) -> Result<LossReport> {
    let recon = tape.value(g.recon).data();
    let kl = tape.value(g.kl).data();
    let b = recon.len() as f64;
    Ok(LossReport {
        total: tape.scalar(g.loss)?,
        recon: recon.iter().sum::<f64>() / b,
        kl: kl.iter().sum::<f64>() / b,
        per_example: recon.iter().copied().zip(kl.iter().copied()).collect(),
    })
}

/// Batch ELBO loss with gradients written into `store`.
///
/// `inputs` (`B × input_dim`) feed the encoder; `targets` (`B × |q|`) are
/// the same functions sampled at the quadrature points. Latent noise is
/// drawn from `rng` in example-major order.
pub fn elbo_loss(
    model: &Vano,
    store: &mut ParamStore,
    inputs: &Matrix,
    targets: &Matrix,
    q: &Quadrature,
    cfg: &ELBOConfig,
    rng: &mut RngStream,
) -> Result<LossReport> {
    let mut tape = Tape::new();
    let g = build_graph(&mut tape, model, store, inputs, targets, q, cfg, rng)?;
    let rep = report(&tape, &g)?;
    if !rep.total.is_finite() {
        return Err(Error::Numerical(format!("loss is {}", rep.total)));
    }
    tape.backward(g.loss, store)?;
    Ok(rep)
}

/// Same quantities as [`elbo_loss`] without gradients, processed in chunks
/// of `chunk` examples. Noise is consumed in the same order, so with the
/// same `rng` state the result matches one `elbo_loss` call on the full set.
pub fn elbo_eval(
    model: &Vano,
    store: &ParamStore,
    inputs: &Matrix,
    targets: &Matrix,
    q: &Quadrature,
    cfg: &ELBOConfig,
    rng: &mut RngStream,
    chunk: usize,
) -> Result<LossReport> {
    cfg.validate()?;
    let b = inputs.rows();
    if b == 0 {
        return Err(Error::config("empty batch"));
    }
    if targets.rows() != b {
        return Err(Error::dim("elbo targets", b, targets.rows()));
    }
    let chunk = chunk.max(1);
    let mut per_example = Vec::with_capacity(b);
    let mut start = 0;
    while start < b {
        let end = (start + chunk).min(b);
        let take = |m: &Matrix| {
            Matrix::from_vec(end - start, m.cols(), m.data()[start * m.cols()..end * m.cols()].to_vec())
        };
        let mut tape = Tape::new();
        let g = build_graph(&mut tape, model, store, &take(inputs)?, &take(targets)?, q, cfg, rng)?;
        per_example.extend(report(&tape, &g)?.per_example);
        start = end;
    }
    let n = b as f64;
    let recon = per_example.iter().map(|p| p.0).sum::<f64>() / n;
    let kl = per_example.iter().map(|p| p.1).sum::<f64>() / n;
    let total = per_example.iter().map(|(r, k)| r + cfg.beta * k).sum::<f64>() / n;
    Ok(LossReport {
        total,
        recon,
        kl,
        per_example,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, Purpose};
    use crate::encodings::{Encoding, PeriodicEncoding};
    use crate::model::{DecoderKind, DecoderSpec, EncoderSpec, ModelConfig, ModelInit};
    use proptest::prelude::*;

    fn grid_q(m: usize, mode: QuadratureMode) -> Quadrature {
        Quadrature::uniform((0..m).map(|i| i as f64 / m as f64).collect(), 1, 1.0, mode).unwrap()
    }

    fn toy(kind: DecoderKind, m: usize, width: usize, n: usize, seed: u64) -> (Vano, ParamStore) {
        let cfg = ModelConfig {
            encoder: EncoderSpec {
                input_dim: m,
                hidden: vec![width],
                latent_dim: n,
                activation: Activation::Tanh,
            },
            decoder: DecoderSpec {
                kind,
                encoding: Encoding::Periodic(PeriodicEncoding::new(2, 1.0, false).unwrap()),
                hidden: vec![width],
                latent_dim: n,
                activation: Activation::Tanh,
                output_activation: Activation::Identity,
            },
        };
        let mut store = ParamStore::new();
        let mut init = ModelInit::new(seed);
        init.rwf = Some(Default::default());
        let model = Vano::new(&mut store, cfg, &init).unwrap();
        (model, store)
    }

    fn data(b: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed, Purpose::Data, 0);
        Matrix::from_vec(b, m, rng.normals(b * m)).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let q = grid_q(4, QuadratureMode::Weighted);
        let v = [1.0, -2.0, 0.5, 3.0];
        let half_norm = 0.5 * v.iter().map(|x| x * x * 0.25).sum::<f64>();
        assert!((white_noise_loglik(&v, &v, &q).unwrap() - half_norm).abs() < 1e-15);
        assert_eq!(white_noise_loglik(&[0.0; 4], &v, &q).unwrap(), 0.0);
        assert!(white_noise_loglik(&v[..3], &v, &q).is_err());
    }

    #[test]
    fn loglik_completes_the_square_on_64_grid() {
        let q = grid_q(64, QuadratureMode::Weighted);
        let mut rng = RngStream::new(1, Purpose::Data, 0);
        let (a, b) = (rng.normals(64), rng.normals(64));
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let rhs = -0.5 * q.norm_sq(&diff).unwrap() + 0.5 * q.norm_sq(&b).unwrap();
        assert!((white_noise_loglik(&a, &b, &q).unwrap() - rhs).abs() < 1e-12);
    }

    #[test]
    fn quadrature_weights_sum_to_measure() {
        let q = grid_q(37, QuadratureMode::Weighted);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(grid_q(5, QuadratureMode::RawSum).weights.iter().all(|w| *w == 1.0));
        assert!(Quadrature::new(vec![0.0, 1.0], 1, vec![1.0, 0.0]).is_err());
        assert_eq!("raw_sum".parse::<QuadratureMode>().unwrap(), QuadratureMode::RawSum);
    }

    #[test]
    fn kl_examples() {
        let post = |mu: Vec<f64>, ls: Vec<f64>| LatentGaussian { mu, log_sigma: ls };
        assert_eq!(kl_gaussian(&post(vec![0.0; 3], vec![0.0; 3])), 0.0);
        assert_eq!(kl_gaussian(&post(vec![1.0], vec![0.0])), 0.5);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = RngStream::new(5, Purpose::Data, 0);
        let mu: Vec<f64> = rng.normals(8).iter().map(|v| 0.5 * v).collect();
        let ls: Vec<f64> = rng.normals(8).iter().map(|v| 0.3 * v).collect();
        let post = LatentGaussian { mu: mu.clone(), log_sigma: ls.clone() };
        let samples = 100_000;
        let mut draws = Vec::with_capacity(samples);
        for _ in 0..samples {
            let mut lr = 0.0;
            for j in 0..8 {
                let e = rng.normal();
                let z = mu[j] + ls[j].exp() * e;
                // log q(z) − log p(z); the 2π terms cancel
                lr += -ls[j] - 0.5 * e * e + 0.5 * z * z;
            }
            draws.push(lr);
        }
        let mean = draws.iter().sum::<f64>() / samples as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let se = (var / samples as f64).sqrt();
        assert!((kl_gaussian(&post) - mean).abs() < 3.0 * se, "{} vs {mean} ± {se}", kl_gaussian(&post));
    }

    #[test]
    fn elbo_total_decomposes() {
        let (model, mut store) = toy(DecoderKind::Linear, 8, 4, 3, 2);
        let u = data(3, 8, 1);
        let q = grid_q(8, QuadratureMode::Weighted);
        let cfg = ELBOConfig {
            beta: 0.3,
            mc_samples: 4,
            norm_rescale: true,
            quadrature_mode: QuadratureMode::Weighted,
            rescale_reference: 1.0,
        };
        let rep = elbo_loss(&model, &mut store, &u, &u, &q, &cfg, &mut RngStream::new(1, Purpose::LatentNoise, 0)).unwrap();
        let mean = rep.per_example.iter().map(|(r, k)| r + 0.3 * k).sum::<f64>() / 3.0;
        assert!((rep.total - mean).abs() < 1e-12);
        assert!(rep.kl >= 0.0);
    }

    #[test]
    fn elbo_recon_matches_direct_evaluation() {
        let (model, mut store) = toy(DecoderKind::Concat, 8, 4, 3, 2);
        let u = data(2, 8, 9);
        let q = grid_q(8, QuadratureMode::Weighted);
        let cfg = ELBOConfig {
            beta: 1.0,
            mc_samples: 3,
            norm_rescale: false,
            quadrature_mode: QuadratureMode::Weighted,
            rescale_reference: 1.0,
        };
        let rep = elbo_loss(&model, &mut store, &u, &u, &q, &cfg, &mut RngStream::new(3, Purpose::LatentNoise, 0)).unwrap();
        let mut rng = RngStream::new(3, Purpose::LatentNoise, 0);
        for i in 0..2 {
            let post = model.encoder.encode(&store, u.row(i)).unwrap();
            let mut recon = 0.0;
            for _ in 0..3 {
                let z = crate::model::sample_latent(&post, &rng.normals(3)).unwrap();
                let d = model.decoder.decode_field(&store, &z, &q.points).unwrap();
                recon -= white_noise_loglik(&d, u.row(i), &q).unwrap() / 3.0;
            }
            assert!((rep.per_example[i].0 - recon).abs() < 1e-12);
            assert!((rep.per_example[i].1 - kl_gaussian(&post)).abs() < 1e-12);
        }
    }

    #[test]
    fn elbo_rejects_bad_config() {
        let (model, mut store) = toy(DecoderKind::Linear, 4, 2, 2, 2);
        let q = grid_q(4, QuadratureMode::Weighted);
        let mut cfg = ELBOConfig {
            beta: 1.0,
            mc_samples: 0,
            norm_rescale: false,
            quadrature_mode: QuadratureMode::Weighted,
            rescale_reference: 1.0,
        };
        let u = data(2, 4, 1);
        let mut rng = RngStream::new(0, Purpose::LatentNoise, 0);
        assert!(matches!(elbo_loss(&model, &mut store, &u, &u, &q, &cfg, &mut rng), Err(Error::Config(_))));
        cfg.mc_samples = 1;
        let empty = Matrix::zeros(0, 4);
        assert!(matches!(elbo_loss(&model, &mut store, &empty, &empty, &q, &cfg, &mut rng), Err(Error::Config(_))));
    }

    fn fd_check(kind: DecoderKind, norm_rescale: bool) {
        let m = 6;
        let (model, mut store) = toy(kind, m, 2, 2, 4);
        let u = data(2, m, 2);
        let q = grid_q(m, QuadratureMode::Weighted);
        let cfg = ELBOConfig {
            beta: 0.7,
            mc_samples: 2,
            norm_rescale,
            quadrature_mode: QuadratureMode::Weighted,
            rescale_reference: 1.0,
        };
        let rng = RngStream::new(11, Purpose::LatentNoise, 0);
        let loss_at = |store: &mut ParamStore| {
            elbo_loss(&model, store, &u, &u, &q, &cfg, &mut rng.clone()).unwrap().total
        };
        loss_at(&mut store);
        let analytic = store.grads().to_vec();
        let h = 1e-6;
        for k in 0..store.len() {
            let orig = store.values()[k];
            store.values_mut()[k] = orig + h;
            let lp = loss_at(&mut store);
            store.values_mut()[k] = orig - h;
            let lm = loss_at(&mut store);
            store.values_mut()[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
            assert!(err <= 1e-4, "{kind} param {k}: fd {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn elbo_gradients_match_finite_differences() {
        for kind in [DecoderKind::Linear, DecoderKind::Concat, DecoderKind::SplitConcat] {
            fd_check(kind, false);
            fd_check(kind, true);
        }
    }

    #[test]
    fn eval_matches_loss_with_same_noise() {
        let (model, mut store) = toy(DecoderKind::Linear, 8, 4, 3, 6);
        let u = data(5, 8, 4);
        let q = grid_q(8, QuadratureMode::Weighted);
        let cfg = ELBOConfig {
            beta: 0.1,
            mc_samples: 2,
            norm_rescale: true,
            quadrature_mode: QuadratureMode::Weighted,
            rescale_reference: 1.0,
        };
        let rng = RngStream::new(8, Purpose::LatentNoise, 0);
        let a = elbo_loss(&model, &mut store, &u, &u, &q, &cfg, &mut rng.clone()).unwrap();
        let b = elbo_eval(&model, &store, &u, &u, &q, &cfg, &mut rng.clone(), 2).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        for (x, y) in a.per_example.iter().zip(&b.per_example) {
            assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_invariant_to_point_permutation() {
        let (model, mut store) = toy(DecoderKind::Concat, 8, 4, 3, 6);
        let u = data(2, 8, 4);
        let q = grid_q(8, QuadratureMode::Weighted);
        let perm = [3usize, 7, 0, 5, 1, 6, 2, 4];
        let qp = q.subset(&perm, 1.0, QuadratureMode::Weighted).unwrap();
        let mut up = Matrix::zeros(2, 8);
        for i in 0..2 {
            for (j, &p) in perm.iter().enumerate() {
                up.set(i, j, u.get(i, p));
            }
        }
        let cfg = ELBOConfig {
            beta: 0.1,
            mc_samples: 2,
            norm_rescale: true,
            quadrature_mode: QuadratureMode::Weighted,
            rescale_reference: 1.0,
        };
        let rng = RngStream::new(8, Purpose::LatentNoise, 0);
        let a = elbo_loss(&model, &mut store, &u, &u, &q, &cfg, &mut rng.clone()).unwrap();
        let b = elbo_loss(&model, &mut store, &u, &up, &qp, &cfg, &mut rng.clone()).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn mc_sample_count_changes_variance_not_mean() {
        let (model, mut store) = toy(DecoderKind::Concat, 8, 4, 3, 7);
        // Put the posterior well away from a point mass so noise matters.
        let u = data(2, 8, 3);
        let q = grid_q(8, QuadratureMode::Weighted);
        let mut stats = Vec::new();
        for s in [1usize, 16] {
            let cfg = ELBOConfig {
                beta: 1.0,
                mc_samples: s,
                norm_rescale: false,
                quadrature_mode: QuadratureMode::Weighted,
                rescale_reference: 1.0,
            };
            let vals: Vec<f64> = (0..200)
                .map(|r| {
                    let mut rng = RngStream::new(1000 + s as u64, Purpose::LatentNoise, r);
                    elbo_eval(&model, &store, &u, &u, &q, &cfg, &mut rng, 8).unwrap().total
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / 200.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0;
            stats.push((mean, var / 200.0));
        }
        let _ = &mut store;
        let se = (stats[0].1 + stats[1].1).sqrt();
        assert!((stats[0].0 - stats[1].0).abs() < 3.0 * se, "{stats:?}");
        assert!(stats[1].1 < stats[0].1);
    }

    #[test]
    fn reparameterized_gradient_of_identity_decoder() {
        // E[½z² − zu] with z ~ N(μ, σ²) has ∂/∂μ = μ − u.
        let (mu0, ls0, u) = (0.4, -0.3, 1.5);
        let mut store = ParamStore::new();
        let mu_id = store.add("mu", &[1, 1], vec![mu0]).unwrap();
        let ls_id = store.add("ls", &[1, 1], vec![ls0]).unwrap();
        let mut rng = RngStream::new(2, Purpose::LatentNoise, 0);
        let draws = 10_000;
        let mut grads = Vec::with_capacity(draws);
        for _ in 0..draws {
            let mut tape = Tape::new();
            let mu = tape.param(&store, mu_id);
            let ls = tape.param(&store, ls_id);
            let z = reparameterize(&mut tape, mu, ls, Matrix::filled(1, 1, rng.normal())).unwrap();
            let r = tape.white_noise_recon(z, Matrix::filled(1, 1, u), vec![1.0]).unwrap();
            let loss = tape.sum(r);
            tape.backward(loss, &mut store).unwrap();
            grads.push(store.grad(mu_id)[0]);
        }
        let mean = grads.iter().sum::<f64>() / draws as f64;
        let var = grads.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - (mu0 - u)).abs() < 3.0 * se, "{mean} vs {}", mu0 - u);
    }

    proptest! {
        #[test]
        fn likelihood_completion_identity(
            vals in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.01f64..2.0), 1..50),
        ) {
            let m = vals.len();
            let q = Quadrature::new((0..m).map(|i| i as f64).collect(), 1, vals.iter().map(|v| v.2).collect()).unwrap();
            let d: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let u: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let diff: Vec<f64> = d.iter().zip(&u).map(|(a, b)| a - b).collect();
            let lhs = white_noise_loglik(&d, &u, &q).unwrap() - 0.5 * q.norm_sq(&u).unwrap();
            let rhs = -0.5 * q.norm_sq(&diff).unwrap();
            let scale = 1.0 + q.norm_sq(&u).unwrap() + q.norm_sq(&d).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn kl_is_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..10), ls in -3.0f64..3.0) {
            let post = LatentGaussian { log_sigma: vec![ls; mu.len()], mu };
            prop_assert!(kl_gaussian(&post) >= 0.0);
        }
    }
}
