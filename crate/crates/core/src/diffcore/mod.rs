//! Minimal reverse-mode differentiable core: matrices, a tape, dense layers,
//! Adam, deterministic random streams and checkpoints.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod matrix;
pub mod params;
pub mod rng;
pub mod tape;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use layers::{Dense, LayerInit, Mlp, RwfInit};
pub use matrix::Matrix;
pub use params::{ParamId, ParamStore};
pub use rng::{Purpose, RngStream};
pub use tape::{Tape, Var};
