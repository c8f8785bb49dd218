//! Dense layers and multi-layer perceptrons.

use super::activation::Activation;
use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use super::rng::{name_index, Purpose, RngStream};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Random weight factorization: `W = diag(exp(s)) · V`, with `s ~ N(mean, std)`
/// per output row and `V = W₀ / exp(s)` for the Glorot draw `W₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RwfInit {
    pub mean: f64,
    pub std: f64,
}

impl Default for RwfInit {
    fn default() -> Self {
        RwfInit {
            mean: 0.5,
            std: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerInit {
    pub seed: u64,
    pub bias: bool,
    /// Start the weight at exactly zero instead of a Glorot draw.
    pub zero_weight: bool,
    pub rwf: Option<RwfInit>,
}

impl LayerInit {
    pub fn new(seed: u64) -> Self {
        LayerInit {
            seed,
            bias: true,
            zero_weight: false,
            rwf: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Weight {
    Plain(ParamId),
    Factorized { scale: ParamId, direction: ParamId },
}

#[derive(Clone, Debug)]
pub struct Dense {
    weight: Weight,
    bias: Option<ParamId>,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

/// Glorot-uniform draw for an `(out, in)` weight, keyed by the tensor name.
pub fn glorot_uniform(seed: u64, name: &str, out_dim: usize, in_dim: usize) -> Vec<f64> {
    let mut rng = RngStream::new(seed, Purpose::Init, name_index(name));
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    (0..out_dim * in_dim)
        .map(|_| (2.0 * rng.uniform() - 1.0) * limit)
        .collect()
}

/// Splits a row-major `(rows, cols)` weight into per-row log-scales and
/// directions such that `exp(scale[i]) * direction[i][j]` reproduces it.
pub fn rwf_factorize(
    weight: &[f64],
    rows: usize,
    cols: usize,
    init: RwfInit,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let scale: Vec<f64> = (0..rows).map(|_| init.mean + init.std * rng.normal()).collect();
    let mut direction = weight.to_vec();
    for (i, s) in scale.iter().enumerate() {
        let inv = (-s).exp();
        direction[i * cols..(i + 1) * cols]
            .iter_mut()
            .for_each(|v| *v *= inv);
    }
    (scale, direction)
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        init: &LayerInit,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config(format!("layer {name} needs nonzero dims, got {in_dim}->{out_dim}")));
        }
        let w_name = format!("{name}.weight");
        let w0 = if init.zero_weight {
            vec![0.0; out_dim * in_dim]
        } else {
            glorot_uniform(init.seed, &w_name, out_dim, in_dim)
        };
        let weight = match init.rwf {
            None => Weight::Plain(store.add(&w_name, &[out_dim, in_dim], w0)?),
            Some(rwf) => {
                let mut rng = RngStream::new(init.seed, Purpose::Init, name_index(&format!("{w_name}.rwf")));
                let (s, v) = rwf_factorize(&w0, out_dim, in_dim, rwf, &mut rng);
                Weight::Factorized {
                    scale: store.add(&format!("{w_name}.scale"), &[out_dim], s)?,
                    direction: store.add(&format!("{w_name}.direction"), &[out_dim, in_dim], v)?,
                }
            }
        };
        let bias = if init.bias {
            Some(store.add(&format!("{name}.bias"), &[out_dim], vec![0.0; out_dim])?)
        } else {
            None
        };
        Ok(Dense {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn has_bias(&self) -> bool {
        self.bias.is_some()
    }

    pub fn is_factorized(&self) -> bool {
        matches!(self.weight, Weight::Factorized { .. })
    }

    /// The effective `(out, in)` weight on the tape.
    pub fn weight(&self, tape: &mut Tape, store: &ParamStore) -> Result<Var> {
        match self.weight {
            Weight::Plain(id) => Ok(tape.param(store, id)),
            Weight::Factorized { scale, direction } => {
                let s = tape.param_as(store, scale, self.out_dim, 1)?;
                let es = tape.exp(s);
                let v = tape.param(store, direction);
                tape.scale_rows(v, es)
            }
        }
    }

    pub fn bias(&self, tape: &mut Tape, store: &ParamStore) -> Option<Var> {
        self.bias.map(|id| tape.param(store, id))
    }

    /// `activation(x · Wᵀ + b)` for a batch `x` of shape `(rows, in)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.in_dim {
            return Err(Error::dim("Dense::forward input", self.in_dim, cols));
        }
        let w = self.weight(tape, store)?;
        let mut h = tape.matmul_nt(x, w)?;
        if let Some(b) = self.bias(tape, store) {
            h = tape.add_row(h, b)?;
        }
        Ok(tape.activation(h, self.activation))
    }

    /// Plain evaluation on one input vector, without keeping a tape.
    pub fn apply(&self, store: &ParamStore, input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(input.to_vec()));
        let y = self.forward(&mut tape, store, x)?;
        Ok(tape.value(y).data().to_vec())
    }
}

/// A stack of dense layers; hidden layers share one activation and the last
/// layer has its own.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` lists every width from input to output, e.g. `[in, 128, 128, out]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        init: &LayerInit,
        zero_last: bool,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config(format!("MLP {name} needs at least input and output sizes")));
        }
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for (i, pair) in sizes.windows(2).enumerate() {
            let last = i + 1 == n;
            let act = if last { output_activation } else { hidden_activation };
            let mut li = *init;
            li.zero_weight = last && zero_last;
            layers.push(Dense::new(store, &format!("{name}.{i}"), pair[0], pair[1], act, &li)?);
        }
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        Mlp { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(tape, store, h)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::adam::{AdamConfig, AdamState};

    #[test]
    fn identity_layer_passes_input() {
        let mut s = ParamStore::new();
        let d = Dense::new(&mut s, "l", 2, 2, Activation::Identity, &LayerInit::new(0)).unwrap();
        let w = s.id("l.weight").unwrap();
        s.tensor_mut(w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.apply(&s, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn softplus_and_sigmoid_heads() {
        let mut s = ParamStore::new();
        let mut init = LayerInit::new(0);
        init.zero_weight = true;
        let d = Dense::new(&mut s, "sp", 4, 1, Activation::Softplus, &init).unwrap();
        s.tensor_mut(s.id("sp.bias").unwrap())[0] = 3.0;
        let y = d.apply(&s, &[9.0, -2.0, 0.1, 5.0]).unwrap();
        assert!((y[0] - 3.048_587_351_573_742).abs() < 1e-12);

        let d = Dense::new(&mut s, "sg", 2, 1, Activation::Sigmoid, &LayerInit::new(0)).unwrap();
        s.tensor_mut(s.id("sg.weight").unwrap()).copy_from_slice(&[1.0, 1.0]);
        let y = d.apply(&s, &[0.5, 0.5]).unwrap();
        assert!((y[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn input_length_is_checked() {
        let mut s = ParamStore::new();
        let d = Dense::new(&mut s, "l", 3, 2, Activation::Gelu, &LayerInit::new(0)).unwrap();
        assert!(matches!(d.apply(&s, &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = glorot_uniform(3, "x.weight", 20, 30);
        let b = glorot_uniform(3, "x.weight", 20, 30);
        assert_eq!(a, b);
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(a.iter().all(|v| v.abs() <= limit));
        assert_ne!(a, glorot_uniform(3, "y.weight", 20, 30));
    }

    fn mlp_pair(rwf: Option<RwfInit>) -> (ParamStore, Mlp) {
        let mut s = ParamStore::new();
        let mut init = LayerInit::new(17);
        init.rwf = rwf;
        let m = Mlp::new(&mut s, "m", &[3, 8, 8, 2], Activation::Gelu, Activation::Identity, &init, false).unwrap();
        (s, m)
    }

    fn run(s: &ParamStore, m: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut t = Tape::new();
        let xv = t.constant(Matrix::from_vec(x.len() / 3, 3, x.to_vec()).unwrap());
        let y = m.forward(&mut t, s, xv).unwrap();
        t.value(y).data().to_vec()
    }

    #[test]
    fn disabled_factorization_matches_plain_bitwise() {
        let (s1, m1) = mlp_pair(None);
        let (s2, m2) = mlp_pair(None);
        let x = [0.3, -1.2, 0.8, 0.1, 0.2, -0.5];
        let a = run(&s1, &m1, &x);
        let b = run(&s2, &m2, &x);
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn zero_scale_factorization_is_exactly_plain() {
        let (plain_s, plain) = mlp_pair(None);
        let (mut fs, fact) = mlp_pair(Some(RwfInit { mean: 0.0, std: 0.0 }));
        // With s = 0 the directions must equal the plain weights exactly.
        for (i, layer) in fact.layers().iter().enumerate() {
            assert!(layer.is_factorized());
            let dir = fs.id(&format!("m.{i}.weight.direction")).unwrap();
            let w = plain_s.id(&format!("m.{i}.weight")).unwrap();
            assert_eq!(fs.tensor(dir), plain_s.tensor(w));
            let sc = fs.id(&format!("m.{i}.weight.scale")).unwrap();
            assert!(fs.tensor(sc).iter().all(|v| *v == 0.0));
        }
        let x = [0.3, -1.2, 0.8, 0.1, 0.2, -0.5];
        assert_eq!(run(&plain_s, &plain, &x), run(&fs, &fact, &x));
        fs.zero_grads();
    }

    #[test]
    fn factorized_weight_reproduces_glorot_draw() {
        let (plain_s, _) = mlp_pair(None);
        let (fs, fact) = mlp_pair(Some(RwfInit::default()));
        let mut t = Tape::new();
        let w = fact.layers()[1].weight(&mut t, &fs).unwrap();
        let want = plain_s.tensor(plain_s.id("m.1.weight").unwrap());
        for (a, b) in t.value(w).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    /// Both parameterizations fit a small smooth regression to ≤ 1e-3.
    #[test]
    fn factorization_does_not_break_optimization() {
        let xs: Vec<f64> = (0..16).map(|i| -1.0 + 2.0 * i as f64 / 15.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (1.5 * x).sin()).collect();
        for rwf in [None, Some(RwfInit::default())] {
            let mut s = ParamStore::new();
            let mut init = LayerInit::new(5);
            init.rwf = rwf;
            let m = Mlp::new(&mut s, "r", &[1, 16, 16, 1], Activation::Tanh, Activation::Identity, &init, false).unwrap();
            let mut adam = AdamState::new(s.len(), AdamConfig { base_lr: 1e-2, decay_every: 500, ..AdamConfig::default() });
            let mut last = f64::INFINITY;
            for _ in 0..1500 {
                let mut t = Tape::new();
                let x = t.constant(Matrix::column_vector(xs.clone()));
                let y = m.forward(&mut t, &s, x).unwrap();
                let target = t.constant(Matrix::column_vector(ys.clone()));
                let neg = t.scale(target, -1.0);
                let r = t.add(y, neg).unwrap();
                let sq = t.mul(r, r).unwrap();
                let loss = t.mean(sq);
                last = t.scalar(loss).unwrap();
                t.backward(loss, &mut s).unwrap();
                adam.step(&mut s).unwrap();
            }
            assert!(last <= 1e-3, "rwf={rwf:?} final loss {last}");
        }
    }
}
