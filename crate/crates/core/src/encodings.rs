//! Positional encodings `γ(x)` applied to query coordinates before decoding.

use std::f64::consts::TAU;

use crate::diffcore::rng::{Purpose, RngStream};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};

/// Default RFF standard deviation, `σ² = 10`.
pub const DEFAULT_RFF_SIGMA: f64 = 3.162_277_660_168_379_5;

/// `[1, cos(ωx), sin(ωx), …, cos(kωx), sin(kωx)]` with `ω = 2π/L`.
///
/// In `sin_only` mode only `[sin(ωx), …, sin(kωx)]` is emitted, so the whole
/// feature vector is exactly zero at `x = 0` and `x = L`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicEncoding {
    pub harmonics: usize,
    pub length: f64,
    pub sin_only: bool,
}

impl PeriodicEncoding {
    pub fn new(harmonics: usize, length: f64, sin_only: bool) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::config(format!("periodic encoding needs L > 0, got {length}")));
        }
        if sin_only && harmonics == 0 {
            return Err(Error::config("sin-only periodic encoding needs at least one harmonic"));
        }
        Ok(PeriodicEncoding {
            harmonics,
            length,
            sin_only,
        })
    }

    pub fn dim(&self) -> usize {
        if self.sin_only {
            self.harmonics
        } else {
            2 * self.harmonics + 1
        }
    }

    pub fn encode(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(x, &mut out);
        out
    }

    fn encode_into(&self, x: f64, out: &mut Vec<f64>) {
        let turns = x / self.length;
        if !self.sin_only {
            out.push(1.0);
        }
        for h in 1..=self.harmonics {
            // Reduce to one period before scaling by 2π, so x = L lands on
            // exactly the same phase as x = 0.
            let phase = TAU * (h as f64 * turns).rem_euclid(1.0);
            if !self.sin_only {
                out.push(phase.cos());
            }
            out.push(phase.sin());
        }
    }
}

/// `[cos(2πBx), sin(2πBx)]` with a frozen `B ∈ ℝ^{q×d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RffEncoding {
    pub b: Matrix,
    pub sigma: f64,
}

impl RffEncoding {
    pub fn features(&self) -> usize {
        self.b.rows()
    }

    pub fn coord_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn dim(&self) -> usize {
        2 * self.features()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.coord_dim() {
            return Err(Error::dim("rff_encode", self.coord_dim(), x.len()));
        }
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(x, &mut out);
        Ok(out)
    }

    fn encode_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let q = self.features();
        let start = out.len();
        out.resize(start + 2 * q, 0.0);
        for r in 0..q {
            let proj: f64 = self.b.row(r).iter().zip(x).map(|(b, v)| b * v).sum();
            let phase = TAU * proj;
            out[start + r] = phase.cos();
            out[start + q + r] = phase.sin();
        }
    }
}

/// Draws `B` with i.i.d. `N(0, σ²)` entries from the `rff_matrix` stream.
pub fn build_rff(seed: u64, q: usize, d: usize, sigma: f64) -> Result<RffEncoding> {
    if q == 0 || d == 0 {
        return Err(Error::config(format!("RFF needs q, d >= 1, got q={q}, d={d}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("RFF needs sigma > 0, got {sigma}")));
    }
    let mut rng = RngStream::new(seed, Purpose::RffMatrix, 0);
    let data = (0..q * d).map(|_| sigma * rng.normal()).collect();
    Ok(RffEncoding {
        b: Matrix::from_vec(q, d, data)?,
        sigma,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoding {
    /// Raw coordinates.
    None { coord_dim: usize },
    Periodic(PeriodicEncoding),
    Rff(RffEncoding),
}

impl Encoding {
    pub fn coord_dim(&self) -> usize {
        match self {
            Encoding::None { coord_dim } => *coord_dim,
            Encoding::Periodic(_) => 1,
            Encoding::Rff(r) => r.coord_dim(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoding::None { coord_dim } => *coord_dim,
            Encoding::Periodic(p) => p.dim(),
            Encoding::Rff(r) => r.dim(),
        }
    }

    /// True when `γ(x)` is the zero vector on the domain boundary.
    pub fn vanishes_on_boundary(&self) -> bool {
        matches!(self, Encoding::Periodic(p) if p.sin_only)
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.coord_dim() {
            return Err(Error::dim("Encoding::encode", self.coord_dim(), x.len()));
        }
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(x, &mut out);
        Ok(out)
    }

    fn encode_into(&self, x: &[f64], out: &mut Vec<f64>) {
        match self {
            Encoding::None { .. } => out.extend_from_slice(x),
            Encoding::Periodic(p) => p.encode_into(x[0], out),
            Encoding::Rff(r) => r.encode_into(x, out),
        }
    }

    /// Encodes `points` (flat, point-major, `coord_dim` values each) into a
    /// `(P, dim)` feature matrix.
    pub fn encode_points(&self, points: &[f64]) -> Result<Matrix> {
        let d = self.coord_dim();
        if d == 0 || points.len() % d != 0 {
            return Err(Error::dim("Encoding::encode_points", d, points.len()));
        }
        let n = points.len() / d;
        let mut data = Vec::with_capacity(n * self.dim());
        for p in points.chunks_exact(d) {
            self.encode_into(p, &mut data);
        }
        Matrix::from_vec(n, self.dim(), data)
    }
}
