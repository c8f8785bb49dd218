//! Deterministic, purpose-separated random streams.
//!
//! Every random draw in the library comes from a stream keyed by
//! `(seed, purpose, index)`. The key selects a ChaCha8 key and `index`
//! selects the ChaCha stream, so streams never overlap and do not depend on
//! how many draws other consumers have made.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Data,
    Init,
    LatentNoise,
    RffMatrix,
    Shuffle,
    Sampling,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Data => 0x6461_7461,
            Purpose::Init => 0x696e_6974,
            Purpose::LatentNoise => 0x6e6f_6973,
            Purpose::RffMatrix => 0x7266_666d,
            Purpose::Shuffle => 0x7368_7566,
            Purpose::Sampling => 0x7361_6d70,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&purpose.code().to_le_bytes());
        key[16..24].copy_from_slice(&splitmix(seed ^ purpose.code()).to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(index);
        RngStream {
            inner,
            spare_normal: None,
        }
    }

    /// Uniform draw in `[0, 1)` with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via the Box–Muller transform on two consecutive
    /// uniforms. The second value of each pair is cached for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `0..n` (`n > 0`), by rejection-free scaling.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable 64-bit FNV-1a hash, used to derive per-tensor stream indices from names.
pub fn name_index(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Fisher–Yates permutation of `0..n` drawn from `rng`.
pub fn permutation(rng: &mut RngStream, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        idx.swap(i, j);
    }
    idx
}
