//! `VANOCKP1` checkpoint files.
//!
//! Layout (little endian): magic `VANOCKP1`; `u32` tensor count; per tensor
//! `u32` name length, name bytes, `u32` rank, `u32` dims, `f64` row-major
//! data. The optimizer section follows in the same encoding.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VANOCKP1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dim("NamedTensor::new", len, data.len()));
        }
        Ok(NamedTensor {
            name: name.into(),
            shape,
            data,
        })
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        NamedTensor {
            name: name.into(),
            shape: vec![],
            data: vec![value],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub optimizer: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.get(name) {
            Some(t) if t.data.len() == 1 => Ok(t.data[0]),
            Some(_) => Err(Error::format(0, format!("tensor {name:?} is not a scalar"))),
            None => Err(Error::format(0, format!("checkpoint is missing {name:?}"))),
        }
    }

    pub fn push_params(&mut self, store: &ParamStore) {
        for slot in store.layout() {
            self.tensors.push(NamedTensor {
                name: slot.name.clone(),
                shape: slot.shape.clone(),
                data: store.values()[slot.offset..slot.offset + slot.len].to_vec(),
            });
        }
    }

    /// Copies every tensor of `store`'s layout from the checkpoint, requiring
    /// matching shapes.
    pub fn restore_params(&self, store: &mut ParamStore) -> Result<()> {
        let slots: Vec<_> = store.layout().to_vec();
        for slot in slots {
            let t = self
                .get(&slot.name)
                .ok_or_else(|| Error::format(0, format!("checkpoint is missing tensor {:?}", slot.name)))?;
            if t.shape != slot.shape {
                return Err(Error::format(
                    0,
                    format!("tensor {:?} has shape {:?}, model expects {:?}", slot.name, t.shape, slot.shape),
                ));
            }
            let id = store.id(&slot.name).expect("slot from layout");
            store.tensor_mut(id).copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn set_adam(&mut self, adam: &AdamState) {
        let c = &adam.config;
        self.optimizer = vec![
            NamedTensor {
                name: "adam.m".into(),
                shape: vec![adam.m.len()],
                data: adam.m.clone(),
            },
            NamedTensor {
                name: "adam.v".into(),
                shape: vec![adam.v.len()],
                data: adam.v.clone(),
            },
            NamedTensor::scalar("adam.step", adam.step as f64),
            NamedTensor::scalar("adam.base_lr", c.base_lr),
            NamedTensor::scalar("adam.decay_rate", c.decay_rate),
            NamedTensor::scalar("adam.decay_every", c.decay_every as f64),
            NamedTensor::scalar("adam.beta1", c.beta1),
            NamedTensor::scalar("adam.beta2", c.beta2),
            NamedTensor::scalar("adam.eps", c.eps),
        ];
    }

    pub fn adam(&self) -> Result<AdamState> {
        let get = |name: &str| -> Result<&NamedTensor> {
            self.optimizer
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::format(0, format!("checkpoint is missing optimizer tensor {name:?}")))
        };
        let s = |name: &str| -> Result<f64> { Ok(get(name)?.data[0]) };
        Ok(AdamState {
            m: get("adam.m")?.data.clone(),
            v: get("adam.v")?.data.clone(),
            step: s("adam.step")? as u64,
            config: AdamConfig {
                base_lr: s("adam.base_lr")?,
                decay_rate: s("adam.decay_rate")?,
                decay_every: s("adam.decay_every")? as u64,
                beta1: s("adam.beta1")?,
                beta2: s("adam.beta2")?,
                eps: s("adam.eps")?,
            },
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        write_section(&mut out, &self.tensors);
        write_section(&mut out, &self.optimizer);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(8)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"VANOCKP1\""));
        }
        let tensors = read_section(&mut r)?;
        let optimizer = read_section(&mut r)?;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after optimizer section"));
        }
        Ok(Checkpoint { tensors, optimizer })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn write_section(out: &mut Vec<u8>, tensors: &[NamedTensor]) {
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for d in &t.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_section(r: &mut ByteReader<'_>) -> Result<Vec<NamedTensor>> {
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let at = r.pos;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::format(at as u64, "tensor name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            data.push(r.f64()?);
        }
        tensors.push(NamedTensor { name, shape, data });
    }
    Ok(tensors)
}

/// Bounds-checked little-endian cursor reporting byte offsets on failure.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos as u64,
                format!("truncated file: need {n} bytes, {} left", self.bytes.len() - self.pos),
            )),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
