//! Function datasets on a shared grid, synthetic generators, and the
//! `VANOFDS1` file format.
//!
//! File layout (little endian): magic `VANOFDS1`; `u32` d, m, N; `f64`
//! extents (min, max per axis); `f64` grid (m·d, point-major); `f64` values
//! (N·m, sample-major); `u32` provenance length + UTF-8 JSON.

mod bumps;
mod grf;

pub use bumps::{sample_bumps, BumpsParams};
pub use grf::{grf_eigpair, sample_grf, GrfMode, GRFParams};

use std::fs;
use std::path::Path;

use crate::diffcore::checkpoint::ByteReader;
use crate::diffcore::rng::{permutation, Purpose, RngStream};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};
use crate::objective::{Quadrature, QuadratureMode};

pub const DATASET_MAGIC: &[u8; 8] = b"VANOFDS1";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub domain_dim: usize,
    /// `(min, max)` per axis.
    pub extents: Vec<(f64, f64)>,
    /// Flat point-major coordinates, `m · domain_dim` values.
    pub grid: Vec<f64>,
    /// `N × m`, one function per row.
    pub values: Matrix,
    /// JSON describing how the data was produced, kept verbatim.
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        domain_dim: usize,
        extents: Vec<(f64, f64)>,
        grid: Vec<f64>,
        values: Matrix,
        provenance: String,
    ) -> Result<Self> {
        if domain_dim == 0 {
            return Err(Error::Input("domain dimension must be >= 1".into()));
        }
        if extents.len() != domain_dim {
            return Err(Error::dim("dataset extents", domain_dim, extents.len()));
        }
        if let Some((a, b)) = extents.iter().find(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::Input(format!("invalid extent [{a}, {b}]")));
        }
        if grid.len() != values.cols() * domain_dim {
            return Err(Error::dim("dataset grid", values.cols() * domain_dim, grid.len()));
        }
        if values.rows() == 0 {
            return Err(Error::Input("dataset needs at least one sample".into()));
        }
        if values.cols() == 0 {
            return Err(Error::Input("dataset needs at least one grid point".into()));
        }
        if let Some(i) = values.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "sample {} has a non-finite value at point {}",
                i / values.cols(),
                i % values.cols()
            )));
        }
        Ok(Dataset {
            domain_dim,
            extents,
            grid,
            values,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn grid_size(&self) -> usize {
        self.values.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Lebesgue measure of the domain box.
    pub fn measure(&self) -> f64 {
        self.extents.iter().map(|(a, b)| b - a).product()
    }

    pub fn quadrature(&self, mode: QuadratureMode) -> Result<Quadrature> {
        Quadrature::uniform(self.grid.clone(), self.domain_dim, self.measure(), mode)
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let m = self.grid_size();
        let mut data = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Input(format!("sample index {i} out of range {}", self.len())));
            }
            data.extend_from_slice(self.sample(i));
        }
        Dataset::new(
            self.domain_dim,
            self.extents.clone(),
            self.grid.clone(),
            Matrix::from_vec(indices.len(), m, data)?,
            self.provenance.clone(),
        )
    }

    /// Whether both datasets are measured at identical points.
    pub fn same_grid(&self, other: &Dataset) -> bool {
        self.domain_dim == other.domain_dim && self.extents == other.extents && self.grid == other.grid
    }

    /// Short human-readable grid description used in error messages.
    pub fn grid_summary(&self) -> String {
        let ext: Vec<String> = self.extents.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
        format!("{} points on {}", self.grid_size(), ext.join("×"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * (self.grid.len() + self.values.data().len()) + self.provenance.len());
        out.extend_from_slice(DATASET_MAGIC);
        for v in [self.domain_dim, self.grid_size(), self.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for (a, b) in &self.extents {
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
        for v in self.grid.iter().chain(self.values.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.provenance.len() as u32).to_le_bytes());
        out.extend_from_slice(self.provenance.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8).ok() != Some(DATASET_MAGIC.as_slice()) {
            return Err(Error::format(0, "bad magic, expected \"VANOFDS1\""));
        }
        let header_at = r.pos as u64;
        let d = r.u32()? as usize;
        let m = r.u32()? as usize;
        let n = r.u32()? as usize;
        if d == 0 || m == 0 {
            return Err(Error::format(header_at, format!("invalid header: d={d}, m={m}")));
        }
        if n == 0 {
            return Err(Error::format(header_at + 8, "dataset has no samples (N = 0)"));
        }
        let floats = 2 * d + m * d + n * m;
        if r.remaining() < floats * 8 + 4 {
            return Err(Error::format(
                r.pos as u64,
                format!("truncated file: header promises {floats} values, {} bytes left", r.remaining()),
            ));
        }
        let mut extents = Vec::with_capacity(d);
        for _ in 0..d {
            let at = r.pos as u64;
            let (a, b) = (r.f64()?, r.f64()?);
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::format(at, format!("invalid extent [{a}, {b}]")));
            }
            extents.push((a, b));
        }
        let mut grid = Vec::with_capacity(m * d);
        for _ in 0..m * d {
            grid.push(r.f64()?);
        }
        let mut values = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            let at = r.pos as u64;
            let v = r.f64()?;
            if !v.is_finite() {
                return Err(Error::format(at, "non-finite sample value"));
            }
            values.push(v);
        }
        let len = r.u32()? as usize;
        let at = r.pos as u64;
        let provenance = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format(at, "provenance is not UTF-8"))?;
        if r.remaining() != 0 {
            return Err(Error::format(r.pos as u64, "trailing bytes after provenance"));
        }
        Dataset::new(d, extents, grid, Matrix::from_vec(n, m, values)?, provenance)
            .map_err(|e| Error::format(0, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    ds.save(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::load(path)
}

/// Uniform grid on `[0, 1]` with both endpoints, `m ≥ 2` points.
pub fn unit_grid(m: usize) -> Vec<f64> {
    let last = (m - 1) as f64;
    (0..m).map(|j| j as f64 / last).collect()
}

/// Tensor-product grid over a box with `resolution` points per axis, both
/// ends included. The first axis varies slowest.
pub fn box_grid(extents: &[(f64, f64)], resolution: usize) -> Result<Vec<f64>> {
    if resolution < 2 {
        return Err(Error::Input(format!("grid resolution must be >= 2, got {resolution}")));
    }
    if extents.is_empty() {
        return Err(Error::Input("grid needs at least one axis".into()));
    }
    let t = unit_grid(resolution);
    let d = extents.len();
    let total = resolution.pow(d as u32);
    let mut grid = Vec::with_capacity(total * d);
    for p in 0..total {
        let mut rem = p;
        let mut coords = vec![0.0; d];
        for k in (0..d).rev() {
            let (a, b) = extents[k];
            coords[k] = a + (b - a) * t[rem % resolution];
            rem /= resolution;
        }
        grid.extend_from_slice(&coords);
    }
    Ok(grid)
}

/// Random disjoint split into `n_train` and `N − n_train` samples.
pub fn train_test_split(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= ds.len() {
        return Err(Error::Input(format!(
            "n_train must be in 1..{}, got {n_train}",
            ds.len()
        )));
    }
    let (train, test) = split_indices(ds.len(), n_train, seed);
    Ok((ds.select(&train)?, ds.select(&test)?))
}

/// Index sets used by [`train_test_split`].
pub fn split_indices(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = RngStream::new(seed, Purpose::Shuffle, u64::MAX);
    let perm = permutation(&mut rng, n);
    let (a, b) = perm.split_at(n_train.min(n));
    (a.to_vec(), b.to_vec())
}
