//! Adam with bias correction and a stepwise exponential learning-rate decay.

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            base_lr: 1e-3,
            decay_rate: 0.9,
            decay_every: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            config,
        }
    }

    /// Learning rate used by the next update: piecewise constant, multiplied
    /// by `decay_rate` at every `decay_every` boundary.
    pub fn effective_lr(&self) -> f64 {
        lr_at(&self.config, self.step)
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::dim("AdamState::step", self.m.len(), store.len()));
        }
        store.check_finite_grads()?;
        let c = self.config;
        let lr = self.effective_lr();
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let grads = store.grads().to_vec();
        let values = store.values_mut();
        for i in 0..values.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            values[i] -= lr * mhat / (vhat.sqrt() + c.eps);
        }
        self.step += 1;
        Ok(())
    }
}

pub fn lr_at(config: &AdamConfig, step: u64) -> f64 {
    let boundaries = step / config.decay_every.max(1);
    config.base_lr * config.decay_rate.powi(boundaries as i32)
}
