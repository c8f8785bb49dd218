use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Pointwise nonlinearities. Gelu is the exact `x·Φ(x)` form, not the tanh
/// approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Gelu,
    Tanh,
    Softplus,
    Sigmoid,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at `x`, given the already computed output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let cdf = if x.abs() > 1e-3 {
                    y / x
                } else {
                    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
                };
                cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Softplus => sigmoid(x),
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Gelu => 1,
            Activation::Tanh => 2,
            Activation::Softplus => 3,
            Activation::Sigmoid => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Gelu,
            2 => Activation::Tanh,
            3 => Activation::Softplus,
            4 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "identity" => Activation::Identity,
            "gelu" => Activation::Gelu,
            "tanh" => Activation::Tanh,
            "softplus" => Activation::Softplus,
            "sigmoid" => Activation::Sigmoid,
            other => return Err(Error::config(format!("unknown activation {other:?}"))),
        })
    }
}
