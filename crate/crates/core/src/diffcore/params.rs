//! Flat parameter storage with a named tensor layout.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Handle to one named tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// All trainable weights in one flat array. Tensors are appended in
/// registration order, so offsets are disjoint and cover `values` exactly.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    values: Vec<f64>,
    grads: Vec<f64>,
    layout: Vec<TensorSlot>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<ParamId> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::dim("ParamStore::add", len, data.len()));
        }
        if self.by_name.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        let id = self.layout.len();
        self.layout.push(TensorSlot {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.values.len(),
            len,
        });
        self.by_name.insert(name.to_string(), id);
        self.values.extend(data);
        self.grads.resize(self.values.len(), 0.0);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn slot(&self, id: ParamId) -> &TensorSlot {
        &self.layout[id.0]
    }

    pub fn layout(&self) -> &[TensorSlot] {
        &self.layout
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.layout.len()).map(ParamId)
    }

    pub fn tensor(&self, id: ParamId) -> &[f64] {
        let s = &self.layout[id.0];
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut [f64] {
        let s = &self.layout[id.0];
        &mut self.values[s.offset..s.offset + s.len]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        let s = &self.layout[id.0];
        &self.grads[s.offset..s.offset + s.len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Name of the first tensor whose slice of `buf` holds a non-finite value.
    pub(crate) fn first_non_finite(&self, buf: &[f64]) -> Option<&str> {
        self.layout
            .iter()
            .find(|s| buf[s.offset..s.offset + s.len].iter().any(|v| !v.is_finite()))
            .map(|s| s.name.as_str())
    }

    pub fn check_finite_grads(&self) -> Result<()> {
        match self.first_non_finite(&self.grads) {
            Some(name) => Err(Error::Numerical(format!("non-finite gradient in tensor {name:?}"))),
            None => Ok(()),
        }
    }

    pub fn check_finite_values(&self) -> Result<()> {
        match self.first_non_finite(&self.values) {
            Some(name) => Err(Error::Numerical(format!("non-finite value in tensor {name:?}"))),
            None => Ok(()),
        }
    }
}
