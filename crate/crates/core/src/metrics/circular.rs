use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircularStats {
    /// `1 − R₁`, in `[0, 1]`.
    pub variance: f64,
    /// `R₂ sin(φ₂ − 2φ₁) / (1 − R₁)^{3/2}`; `None` when `R₁ = 1`.
    pub skewness: Option<f64>,
    pub r1: f64,
}

fn moment(thetas: &[f64], p: f64) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for t in thetas {
        re += (p * t).cos();
        im += (p * t).sin();
    }
    (re, im)
}

pub fn circular_stats(thetas: &[f64]) -> Result<CircularStats> {
    if thetas.is_empty() {
        return Err(Error::Input("circular statistics need at least one angle".into()));
    }
    if let Some(t) = thetas.iter().find(|t| !t.is_finite()) {
        return Err(Error::Input(format!("non-finite angle {t}")));
    }
    let wrap = |t: f64| (t + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let first = wrap(thetas[0]);
    if thetas.iter().all(|t| wrap(*t) == first) {
        return Ok(CircularStats {
            variance: 0.0,
            skewness: None,
            r1: 1.0,
        });
    }
    let n = thetas.len() as f64;
    let (c1, s1) = moment(thetas, 1.0);
    let (c2, s2) = moment(thetas, 2.0);
    // Resultants at rounding level (e.g. sin(π) ≠ 0) are treated as zero.
    let floor = |r: f64| if r < 4.0 * f64::EPSILON { 0.0 } else { r.min(1.0) };
    let r1 = floor(c1.hypot(s1) / n);
    let r2 = c2.hypot(s2) / n;
    let variance = (1.0 - r1).clamp(0.0, 1.0);
    let skewness = if variance > 0.0 {
        let (phi1, phi2) = (s1.atan2(c1), s2.atan2(c2));
        Some(r2 * (phi2 - 2.0 * phi1).sin() / variance.powf(1.5))
    } else {
        None
    };
    Ok(CircularStats { variance, skewness, r1 })
}
