//! Wave-speed models `c(v)`.
//!
//! The model set is closed so that uniform bounds `𝒦⁻¹ ≤ c ≤ 𝒦` are always
//! computable: a constant speed, and the liquid-crystal family
//! `c²(v) = γ cos²v + α sin²v`.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of samples over one period used for suprema of `c`-dependent
/// ratios.
const PERIOD_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SpeedModel {
    Constant { c0: f64 },
    #[serde(rename = "trig")]
    Trigonometric { alpha: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveSpeed {
    model: SpeedModel,
}

/// Tightest box `[k_inv, k]` containing the range of `c`, plus
/// `c1 = sup |c'/(4c²)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedBounds {
    pub k_inv: f64,
    pub k: f64,
    pub c1: f64,
}

impl SpeedBounds {
    /// Smallest `𝒦 ≥ 1` with `𝒦⁻¹ ≤ c ≤ 𝒦`.
    pub fn kappa(&self) -> f64 {
        self.k.max(1.0 / self.k_inv).max(1.0)
    }
}

impl WaveSpeed {
    pub fn constant(c0: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::InvalidWaveSpeed(format!("c0 must be positive, got {c0}")));
        }
        Ok(Self {
            model: SpeedModel::Constant { c0 },
        })
    }

    pub fn trigonometric(alpha: f64, gamma: f64) -> Result<Self> {
        for (name, val) in [("alpha", alpha), ("gamma", gamma)] {
            if !(val.is_finite() && val > 0.0) {
                return Err(Error::InvalidWaveSpeed(format!("{name} must be positive, got {val}")));
            }
        }
        Ok(Self {
            model: SpeedModel::Trigonometric { alpha, gamma },
        })
    }

    pub fn model(&self) -> SpeedModel {
        self.model
    }

    #[inline]
    pub fn c(&self, v: f64) -> f64 {
        match self.model {
            SpeedModel::Constant { c0 } => c0,
            SpeedModel::Trigonometric { alpha, gamma } => trig_c(alpha, gamma, v),
        }
    }

    #[inline]
    pub fn c_prime(&self, v: f64) -> f64 {
        match self.model {
            SpeedModel::Constant { .. } => 0.0,
            SpeedModel::Trigonometric { alpha, gamma } => {
                let (s, co) = v.sin_cos();
                (alpha - gamma) * s * co / self.c(v)
            }
        }
    }

    /// `(c, c')` in one call.
    #[inline]
    pub fn c_and_prime(&self, v: f64) -> (f64, f64) {
        match self.model {
            SpeedModel::Constant { c0 } => (c0, 0.0),
            SpeedModel::Trigonometric { alpha, gamma } => {
                let c = trig_c(alpha, gamma, v);
                let (s, co) = v.sin_cos();
                (c, (alpha - gamma) * s * co / c)
            }
        }
    }

    pub fn bounds(&self) -> SpeedBounds {
        match self.model {
            SpeedModel::Constant { c0 } => SpeedBounds {
                k_inv: c0,
                k: c0,
                c1: 0.0,
            },
            SpeedModel::Trigonometric { alpha, gamma } => SpeedBounds {
                k_inv: alpha.min(gamma).sqrt(),
                k: alpha.max(gamma).sqrt(),
                c1: self.sup_over_period(|c, cp| (cp / (4.0 * c * c)).abs()),
            },
        }
    }

    /// `sup_v f(c(v), c'(v))`, sampled densely over one period of `c`.
    /// Exact for the constant model.
    pub fn sup_over_period(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        match self.model {
            SpeedModel::Constant { c0 } => f(c0, 0.0),
            SpeedModel::Trigonometric { .. } => (0..PERIOD_SAMPLES)
                .map(|k| {
                    let v = 2.0 * PI * k as f64 / PERIOD_SAMPLES as f64;
                    let (c, cp) = self.c_and_prime(v);
                    f(c, cp)
                })
                .fold(0.0, f64::max),
        }
    }
}

/// `sqrt(γ cos²v + α sin²v)`, written as `min + |α-γ|·(trig²)` so the
/// result never leaves `[sqrt(min), sqrt(max)]` through rounding.
#[inline]
fn trig_c(alpha: f64, gamma: f64, v: f64) -> f64 {
    let (s, co) = v.sin_cos();
    let c2 = if alpha >= gamma {
        gamma + (alpha - gamma) * s * s
    } else {
        alpha + (gamma - alpha) * co * co
    };
    c2.min(alpha.max(gamma)).sqrt()
}
