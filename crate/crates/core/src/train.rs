//! Training configuration, presets and the optimization loop.
//!
//! The config file is flat UTF-8 `key = value` lines; `#` starts a comment.
//! Keys not present fall back to the preset named by `experiment`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::data::Dataset;
use crate::diffcore::rng::{permutation, Purpose, RngStream};
use crate::diffcore::{Activation, AdamConfig, AdamState, Checkpoint, Matrix, NamedTensor, ParamStore, RwfInit};
use crate::encodings::{build_rff, Encoding, PeriodicEncoding, DEFAULT_RFF_SIGMA};
use crate::error::{Error, Result};
use crate::model::{DecoderKind, DecoderSpec, EncoderSpec, ModelConfig, ModelInit, Vano};
use crate::objective::{elbo_loss, ELBOConfig, LossReport, Quadrature, QuadratureMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Grf,
    Bumps,
    Custom,
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Experiment::Grf => "grf",
            Experiment::Bumps => "bumps",
            Experiment::Custom => "custom",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grf" => Ok(Experiment::Grf),
            "bumps" => Ok(Experiment::Bumps),
            "custom" => Ok(Experiment::Custom),
            other => Err(Error::config(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodingKind {
    None,
    Periodic,
    Rff,
}

impl std::fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncodingKind::None => "none",
            EncodingKind::Periodic => "periodic",
            EncodingKind::Rff => "rff",
        })
    }
}

impl FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EncodingKind::None),
            "periodic" => Ok(EncodingKind::Periodic),
            "rff" => Ok(EncodingKind::Rff),
            other => Err(Error::config(format!("unknown encoding {other:?}"))),
        }
    }
}

/// How the per-example reconstruction weight is normalized when
/// `norm_rescale` is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RescaleMode {
    /// `1 / ‖u‖²_q`.
    Absolute,
    /// `mean_train ‖u‖²_q / ‖u‖²_q`: equalizes examples while keeping the
    /// average magnitude of the reconstruction term.
    Relative,
}

impl std::fmt::Display for RescaleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RescaleMode::Absolute => "absolute",
            RescaleMode::Relative => "relative",
        })
    }
}

impl FromStr for RescaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(RescaleMode::Absolute),
            "relative" => Ok(RescaleMode::Relative),
            other => Err(Error::config(format!("unknown rescale mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub experiment: Experiment,
    pub latent_dim: usize,
    pub beta: f64,
    pub mc_samples: usize,
    pub decoder: DecoderKind,
    pub decoder_hidden: Vec<usize>,
    pub decoder_activation: Activation,
    pub output_activation: Activation,
    pub encoder_hidden: Vec<usize>,
    pub encoder_activation: Activation,
    pub encoding: EncodingKind,
    pub periodic_harmonics: usize,
    pub periodic_length: f64,
    pub periodic_sin_only: bool,
    /// RFF feature count `q`; 0 means `n/2`.
    pub rff_features: usize,
    pub rff_sigma: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
    /// Epoch shuffling and per-step point subsampling.
    pub data_seed: u64,
    /// Weights and RFF matrix.
    pub init_seed: u64,
    /// Latent noise.
    pub noise_seed: u64,
    pub norm_rescale: bool,
    pub rescale_mode: RescaleMode,
    pub quadrature_mode: QuadratureMode,
    pub rwf: bool,
    /// Quadrature points per step for the reconstruction term; 0 uses all.
    pub points_per_step: usize,
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn grf() -> Self {
        TrainConfig {
            experiment: Experiment::Grf,
            latent_dim: 64,
            beta: 5e-6,
            mc_samples: 16,
            decoder: DecoderKind::Linear,
            decoder_hidden: vec![128, 128, 128],
            decoder_activation: Activation::Gelu,
            output_activation: Activation::Identity,
            encoder_hidden: vec![128, 128, 128],
            encoder_activation: Activation::Gelu,
            encoding: EncodingKind::Periodic,
            periodic_harmonics: 32,
            periodic_length: 1.0,
            periodic_sin_only: true,
            rff_features: 0,
            rff_sigma: DEFAULT_RFF_SIGMA,
            batch_size: 32,
            iterations: 40_000,
            base_lr: 1e-3,
            decay_rate: 0.9,
            decay_every: 1000,
            data_seed: 0,
            init_seed: 0,
            noise_seed: 0,
            norm_rescale: true,
            rescale_mode: RescaleMode::Relative,
            quadrature_mode: QuadratureMode::Weighted,
            rwf: true,
            points_per_step: 0,
            checkpoint_every: 2000,
        }
    }

    pub fn bumps() -> Self {
        TrainConfig {
            experiment: Experiment::Bumps,
            latent_dim: 32,
            beta: 1e-2,
            mc_samples: 4,
            decoder: DecoderKind::Concat,
            output_activation: Activation::Softplus,
            encoding: EncodingKind::Rff,
            iterations: 20_000,
            points_per_step: 256,
            rescale_mode: RescaleMode::Absolute,
            ..TrainConfig::grf()
        }
    }

    pub fn preset(e: Experiment) -> Self {
        match e {
            Experiment::Bumps => TrainConfig::bumps(),
            Experiment::Grf => TrainConfig::grf(),
            Experiment::Custom => TrainConfig {
                experiment: Experiment::Custom,
                ..TrainConfig::grf()
            },
        }
    }

    /// Objective settings; `reference` is the numerator of the rescaling
    /// factor (see [`Trainer::rescale_reference`]).
    pub fn elbo(&self, reference: f64) -> ELBOConfig {
        ELBOConfig {
            beta: self.beta,
            mc_samples: self.mc_samples,
            norm_rescale: self.norm_rescale,
            rescale_reference: reference,
            quadrature_mode: self.quadrature_mode,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            base_lr: self.base_lr,
            decay_rate: self.decay_rate,
            decay_every: self.decay_every,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.elbo(1.0).validate()?;
        if self.latent_dim == 0 {
            return Err(Error::config("latent_dim must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.decay_every == 0 {
            return Err(Error::config("decay_every must be >= 1"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::config(format!("decay_rate must be in (0, 1], got {}", self.decay_rate)));
        }
        if self.decoder != DecoderKind::Linear && self.decoder_hidden.is_empty() {
            return Err(Error::config(format!("{} decoder needs hidden layers", self.decoder)));
        }
        Ok(())
    }

    /// Architecture for data with `input_dim` measurements per function on a
    /// `coord_dim`-dimensional domain.
    pub fn model_config(&self, input_dim: usize, coord_dim: usize) -> Result<ModelConfig> {
        self.validate()?;
        let n = self.latent_dim;
        let encoding = match self.encoding {
            EncodingKind::None => Encoding::None { coord_dim },
            EncodingKind::Periodic => {
                if coord_dim != 1 {
                    return Err(Error::config(format!(
                        "periodic encoding needs a 1D domain, data is {coord_dim}D"
                    )));
                }
                Encoding::Periodic(PeriodicEncoding::new(
                    self.periodic_harmonics,
                    self.periodic_length,
                    self.periodic_sin_only,
                )?)
            }
            EncodingKind::Rff => {
                let q = if self.rff_features == 0 { (n / 2).max(1) } else { self.rff_features };
                Encoding::Rff(build_rff(self.init_seed, q, coord_dim, self.rff_sigma)?)
            }
        };
        Ok(ModelConfig {
            encoder: EncoderSpec {
                input_dim,
                hidden: self.encoder_hidden.clone(),
                latent_dim: n,
                activation: self.encoder_activation,
            },
            decoder: DecoderSpec {
                kind: self.decoder,
                encoding,
                hidden: self.decoder_hidden.clone(),
                latent_dim: n,
                activation: self.decoder_activation,
                output_activation: self.output_activation,
            },
        })
    }

    pub fn model_init(&self) -> ModelInit {
        ModelInit {
            seed: self.init_seed,
            rwf: self.rwf.then(RwfInit::default),
            zero_final_encoder: false,
            zero_final_decoder: false,
        }
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment", self.experiment.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("beta", self.beta.to_string());
        kv("mc_samples", self.mc_samples.to_string());
        kv("decoder", self.decoder.to_string());
        kv("decoder_hidden", list(&self.decoder_hidden));
        kv("decoder_activation", self.decoder_activation.to_string());
        kv("output_activation", self.output_activation.to_string());
        kv("encoder_hidden", list(&self.encoder_hidden));
        kv("encoder_activation", self.encoder_activation.to_string());
        kv("encoding", self.encoding.to_string());
        kv("periodic_harmonics", self.periodic_harmonics.to_string());
        kv("periodic_length", self.periodic_length.to_string());
        kv("periodic_sin_only", self.periodic_sin_only.to_string());
        kv("rff_features", self.rff_features.to_string());
        kv("rff_sigma", self.rff_sigma.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("iterations", self.iterations.to_string());
        kv("base_lr", self.base_lr.to_string());
        kv("decay_rate", self.decay_rate.to_string());
        kv("decay_every", self.decay_every.to_string());
        kv("data_seed", self.data_seed.to_string());
        kv("init_seed", self.init_seed.to_string());
        kv("noise_seed", self.noise_seed.to_string());
        kv("norm_rescale", self.norm_rescale.to_string());
        kv("rescale_mode", self.rescale_mode.to_string());
        kv("quadrature_mode", self.quadrature_mode.to_string());
        kv("rwf", self.rwf.to_string());
        kv("points_per_step", self.points_per_step.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key {k:?}", lineno + 1)));
            }
        }
        let experiment = match map.remove("experiment") {
            Some(e) => e.parse()?,
            None => Experiment::Custom,
        };
        let mut c = TrainConfig::preset(experiment);
        for (k, v) in map {
            c.set(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(format!("bad value {v:?} for {key}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(vec![]);
            }
            v.split(',').map(|x| p(key, x.trim())).collect()
        }
        let v = value;
        match key {
            "experiment" => self.experiment = v.parse()?,
            "latent_dim" => self.latent_dim = p(key, v)?,
            "beta" => self.beta = p(key, v)?,
            "mc_samples" => self.mc_samples = p(key, v)?,
            "decoder" => self.decoder = v.parse()?,
            "decoder_hidden" => self.decoder_hidden = list(key, v)?,
            "decoder_activation" => self.decoder_activation = v.parse()?,
            "output_activation" => self.output_activation = v.parse()?,
            "encoder_hidden" => self.encoder_hidden = list(key, v)?,
            "encoder_activation" => self.encoder_activation = v.parse()?,
            "encoding" => self.encoding = v.parse()?,
            "periodic_harmonics" => self.periodic_harmonics = p(key, v)?,
            "periodic_length" => self.periodic_length = p(key, v)?,
            "periodic_sin_only" => self.periodic_sin_only = p(key, v)?,
            "rff_features" => self.rff_features = p(key, v)?,
            "rff_sigma" => self.rff_sigma = p(key, v)?,
            "batch_size" => self.batch_size = p(key, v)?,
            "iterations" => self.iterations = p(key, v)?,
            "base_lr" => self.base_lr = p(key, v)?,
            "decay_rate" => self.decay_rate = p(key, v)?,
            "decay_every" => self.decay_every = p(key, v)?,
            "data_seed" => self.data_seed = p(key, v)?,
            "init_seed" => self.init_seed = p(key, v)?,
            "noise_seed" => self.noise_seed = p(key, v)?,
            "norm_rescale" => self.norm_rescale = p(key, v)?,
            "rescale_mode" => self.rescale_mode = v.parse()?,
            "quadrature_mode" => self.quadrature_mode = v.parse()?,
            "rwf" => self.rwf = p(key, v)?,
            "points_per_step" => self.points_per_step = p(key, v)?,
            "checkpoint_every" => self.checkpoint_every = p(key, v)?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub effective_lr: f64,
    pub wall_ms: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,total,recon,kl,effective_lr,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.step, self.total, self.recon, self.kl, self.effective_lr, self.wall_ms
        )
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Vano,
    pub store: ParamStore,
    pub adam: AdamState,
    data: Dataset,
    quadrature: Quadrature,
    elbo: ELBOConfig,
    perm: Option<(u64, Vec<usize>)>,
    started: Instant,
}

const STEP_KEY: &str = "train.step";
const EXTENTS_KEY: &str = "data.extents";

/// Domain box of the training data stored in a checkpoint, if present.
pub fn checkpoint_extents(ck: &Checkpoint) -> Result<Option<Vec<(f64, f64)>>> {
    match ck.get(EXTENTS_KEY) {
        None => Ok(None),
        Some(t) if t.shape.len() == 2 && t.shape[1] == 2 => {
            Ok(Some(t.data.chunks_exact(2).map(|c| (c[0], c[1])).collect()))
        }
        Some(_) => Err(Error::format(0, format!("malformed {EXTENTS_KEY:?} tensor"))),
    }
}

/// Completed optimizer steps recorded in a training checkpoint.
pub fn checkpoint_step(ck: &Checkpoint) -> Result<u64> {
    Ok(ck.scalar(STEP_KEY)? as u64)
}

impl Trainer {
    pub fn new(config: TrainConfig, data: Dataset) -> Result<Self> {
        let mc = config.model_config(data.grid_size(), data.domain_dim)?;
        let mut store = ParamStore::new();
        let model = Vano::new(&mut store, mc, &config.model_init())?;
        let adam = AdamState::new(store.len(), config.adam());
        Trainer::assemble(config, model, store, adam, data)
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(config: TrainConfig, data: Dataset, ck: &Checkpoint) -> Result<Self> {
        let (model, store) = Vano::from_checkpoint(ck)?;
        if model.config.encoder.input_dim != data.grid_size() {
            return Err(Error::dim("resume: grid size", model.config.encoder.input_dim, data.grid_size()));
        }
        let adam = ck.adam()?;
        if adam.m.len() != store.len() {
            return Err(Error::format(0, "optimizer state does not match the parameters"));
        }
        Trainer::assemble(config, model, store, adam, data)
    }

    fn assemble(config: TrainConfig, model: Vano, store: ParamStore, adam: AdamState, data: Dataset) -> Result<Self> {
        let quadrature = data.quadrature(config.quadrature_mode)?;
        let reference = match config.rescale_mode {
            RescaleMode::Absolute => 1.0,
            RescaleMode::Relative => Trainer::mean_norm_sq(&data, &quadrature)?,
        };
        let elbo = config.elbo(reference);
        Ok(Trainer {
            config,
            model,
            store,
            adam,
            data,
            quadrature,
            elbo,
            perm: None,
            started: Instant::now(),
        })
    }

    fn mean_norm_sq(data: &Dataset, q: &Quadrature) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..data.len() {
            total += q.norm_sq(data.sample(i))?;
        }
        let mean = total / data.len() as f64;
        if mean > 0.0 && mean.is_finite() {
            Ok(mean)
        } else {
            Err(Error::Input(format!("training data has mean squared norm {mean}")))
        }
    }

    /// Numerator of the per-example rescaling factor.
    pub fn rescale_reference(&self) -> f64 {
        self.elbo.rescale_reference
    }

    /// Objective settings used for every step.
    pub fn elbo_config(&self) -> &ELBOConfig {
        &self.elbo
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Number of completed optimizer steps.
    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// Sample indices of the batch for step `step` (0-based). Each epoch is a
    /// fresh permutation; a trailing partial batch is dropped.
    pub fn batch_indices(&mut self, step: u64) -> Vec<usize> {
        let n = self.data.len();
        let b = self.config.batch_size.min(n);
        let per_epoch = (n / b) as u64;
        let (epoch, k) = (step / per_epoch, (step % per_epoch) as usize);
        if self.perm.as_ref().map(|p| p.0) != Some(epoch) {
            let mut rng = RngStream::new(self.config.data_seed, Purpose::Shuffle, epoch);
            self.perm = Some((epoch, permutation(&mut rng, n)));
        }
        self.perm.as_ref().expect("set above").1[k * b..(k + 1) * b].to_vec()
    }

    /// Quadrature subset for step `step`, or `None` to use every point.
    fn point_indices(&self, step: u64) -> Option<Vec<usize>> {
        let m = self.data.grid_size();
        let p = self.config.points_per_step;
        if p == 0 || p >= m {
            return None;
        }
        let mut rng = RngStream::new(self.config.data_seed, Purpose::Shuffle, (1 << 63) | step);
        let mut idx = permutation(&mut rng, m);
        idx.truncate(p);
        idx.sort_unstable();
        Some(idx)
    }

    /// One optimizer step. Parameters are untouched if the loss or any
    /// gradient is not finite.
    pub fn step(&mut self) -> Result<StepRecord> {
        let step = self.adam.step;
        let idx = self.batch_indices(step);
        let m = self.data.grid_size();
        let mut inputs = Matrix::zeros(idx.len(), m);
        for (r, &i) in idx.iter().enumerate() {
            inputs.row_mut(r).copy_from_slice(self.data.sample(i));
        }
        let (targets, q) = match self.point_indices(step) {
            None => (inputs.clone(), self.quadrature.clone()),
            Some(pts) => {
                let mut t = Matrix::zeros(idx.len(), pts.len());
                for r in 0..idx.len() {
                    let src = inputs.row(r);
                    for (o, &p) in t.row_mut(r).iter_mut().zip(&pts) {
                        *o = src[p];
                    }
                }
                let q = self
                    .quadrature
                    .subset(&pts, self.data.measure(), self.config.quadrature_mode)?;
                (t, q)
            }
        };
        let mut rng = RngStream::new(self.config.noise_seed, Purpose::LatentNoise, step);
        let lr = self.adam.effective_lr();
        let rep: LossReport = elbo_loss(
            &self.model,
            &mut self.store,
            &inputs,
            &targets,
            &q,
            &self.elbo,
            &mut rng,
        )?;
        self.adam.step(&mut self.store)?;
        Ok(StepRecord {
            step: self.adam.step,
            total: rep.total,
            recon: rep.recon,
            kl: rep.kl,
            effective_lr: lr,
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs until `config.iterations` steps are done, calling `observe` after
    /// every step.
    pub fn run(&mut self, mut observe: impl FnMut(&StepRecord, &Trainer) -> Result<()>) -> Result<()> {
        while self.adam.step < self.config.iterations {
            let rec = self.step()?;
            observe(&rec, self)?;
        }
        Ok(())
    }

    /// Architecture, weights, optimizer state and step counter.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            tensors: self.model.meta_tensors(),
            optimizer: vec![],
        };
        ck.tensors.push(NamedTensor::scalar(STEP_KEY, self.adam.step as f64));
        let ext: Vec<f64> = self.data.extents.iter().flat_map(|(a, b)| [*a, *b]).collect();
        ck.tensors.push(NamedTensor {
            name: EXTENTS_KEY.into(),
            shape: vec![self.data.extents.len(), 2],
            data: ext,
        });
        ck.push_params(&self.store);
        ck.set_adam(&self.adam);
        ck
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_bumps, sample_grf, BumpsParams, GRFParams};

    fn tiny() -> TrainConfig {
        TrainConfig {
            latent_dim: 4,
            mc_samples: 2,
            decoder_hidden: vec![8, 8],
            encoder_hidden: vec![8],
            periodic_harmonics: 4,
            batch_size: 4,
            iterations: 6,
            ..TrainConfig::grf()
        }
    }

    fn grf_data() -> Dataset {
        sample_grf(&GRFParams { m: 16, n_samples: 10, ..GRFParams::default() }, 1).unwrap()
    }

    #[test]
    fn presets_round_trip_through_text() {
        for c in [TrainConfig::grf(), TrainConfig::bumps(), tiny()] {
            let text = c.to_text();
            assert_eq!(TrainConfig::from_text(&text).unwrap(), c);
            assert_eq!(TrainConfig::from_text(&text).unwrap().to_text(), text);
        }
    }

    #[test]
    fn preset_values() {
        let g = TrainConfig::grf();
        assert_eq!((g.latent_dim, g.beta, g.mc_samples, g.batch_size, g.iterations), (64, 5e-6, 16, 32, 40_000));
        assert_eq!(g.decoder, DecoderKind::Linear);
        let b = TrainConfig::bumps();
        assert_eq!((b.latent_dim, b.beta, b.mc_samples, b.batch_size, b.iterations), (32, 1e-2, 4, 32, 20_000));
        assert_eq!(b.rescale_mode, RescaleMode::Absolute);
        assert_eq!(b.decoder, DecoderKind::Concat);
        assert_eq!(b.output_activation, Activation::Softplus);
    }

    #[test]
    fn text_parsing_handles_comments_and_presets() {
        let c = TrainConfig::from_text("# run\nexperiment = bumps  # preset\n\nbeta = 0.5\n").unwrap();
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.latent_dim, 32);
        assert!(TrainConfig::from_text("nonsense = 1").is_err());
        assert!(TrainConfig::from_text("beta = x").is_err());
        assert!(TrainConfig::from_text("beta 1").is_err());
        assert!(TrainConfig::from_text("beta = 1\nbeta = 2").is_err());
        assert!(TrainConfig::from_text("mc_samples = 0").is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut t = Trainer::new(tiny(), grf_data()).unwrap();
            let mut log = Vec::new();
            t.run(|r, _| {
                log.push((r.total, r.recon, r.kl));
                Ok(())
            })
            .unwrap();
            (t.store.values().to_vec(), log)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.len(), 6);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let mut full = Trainer::new(tiny(), grf_data()).unwrap();
        full.run(|_, _| Ok(())).unwrap();

        let mut half = Trainer::new(TrainConfig { iterations: 3, ..tiny() }, grf_data()).unwrap();
        half.run(|_, _| Ok(())).unwrap();
        let ck = Checkpoint::from_bytes(&half.checkpoint().to_bytes()).unwrap();
        let mut rest = Trainer::resume(tiny(), grf_data(), &ck).unwrap();
        assert_eq!(rest.step_count(), 3);
        assert_eq!(checkpoint_step(&ck).unwrap(), 3);
        assert_eq!(checkpoint_extents(&ck).unwrap(), Some(vec![(0.0, 1.0)]));
        rest.run(|_, _| Ok(())).unwrap();
        assert_eq!(rest.store.values(), full.store.values());
        assert_eq!(rest.adam, full.adam);
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut t = Trainer::new(tiny(), grf_data()).unwrap();
        let mut seen: Vec<usize> = (0..2).flat_map(|s| t.batch_indices(s)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        assert_ne!(t.batch_indices(0), t.batch_indices(2));
    }

    #[test]
    fn loss_decreases_on_small_grf() {
        let cfg = TrainConfig { iterations: 300, beta: 0.0, base_lr: 3e-3, ..tiny() };
        let mut t = Trainer::new(cfg, grf_data()).unwrap();
        let mut log = Vec::new();
        t.run(|r, _| {
            log.push(r.recon);
            Ok(())
        })
        .unwrap();
        let head: f64 = log[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = log[log.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn bumps_preset_builds_on_2d_data_with_point_subsampling() {
        let data = sample_bumps(&BumpsParams { n_samples: 6, side: 6, ..Default::default() }, 2).unwrap();
        let cfg = TrainConfig {
            latent_dim: 4,
            decoder_hidden: vec![8, 8],
            encoder_hidden: vec![8],
            batch_size: 3,
            iterations: 3,
            points_per_step: 10,
            ..TrainConfig::bumps()
        };
        let mut t = Trainer::new(cfg, data).unwrap();
        t.run(|r, _| {
            assert!(r.total.is_finite());
            Ok(())
        })
        .unwrap();
        let pts = t.point_indices(0).unwrap();
        assert_eq!(pts.len(), 10);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nan_loss_aborts_without_update() {
        let mut t = Trainer::new(tiny(), grf_data()).unwrap();
        let id = t.store.ids().next().unwrap();
        t.store.tensor_mut(id)[0] = f64::NAN;
        let before = t.store.values().to_vec();
        assert!(matches!(t.step(), Err(Error::Numerical(_))));
        assert_eq!(t.step_count(), 0);
        let after = t.store.values();
        assert!(before.iter().zip(after).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
