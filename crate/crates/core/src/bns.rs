//! Fused batch-norm + scale (BNS).
//!
//! At inference the batch-norm statistics, the learned scale/shift pair, and
//! the per-feature weight scale `alpha` collapse into a single multiply-add
//! per feature:
//!
//! ```text
//! gamma = (y / x) * alpha
//! beta  = z - (y / x) * w
//! ```
//!
//! with `w` the normalization shift (mean-like), `x` the normalization scale
//! divisor (std-like), and `y`, `z` the learned scale and shift. Applying
//! `gamma * acc + beta` to the integer accumulator then reproduces the whole
//! unfused chain. The activation-code scale of the previous layer (`1/L`) is
//! folded into `gamma` as well, so the PE array runs on plain integers.
//!
//! Application uses 32-bit float arithmetic, matching the hardware's single
//! precision scale-and-shift stage.

use crate::numerics::ActFormat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BnsError {
    #[error("feature {0}: normalization scale divisor is zero")]
    SingularScale(usize),
    #[error("feature {0}: alpha must be positive, got {1}")]
    NonPositiveAlpha(usize, f32),
    #[error("feature {0}: non-finite fused parameter")]
    NonFinite(usize),
}

/// Unfused per-feature parameters: normalization shift/scale, learned
/// scale/shift, and the weight scale alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnsRawParams {
    /// Normalization shift (subtracted statistic), `w`.
    pub bn_shift: f32,
    /// Normalization scale divisor, `x`; must be nonzero.
    pub bn_scale: f32,
    /// Learned scale, `y`.
    pub scale: f32,
    /// Learned shift, `z`.
    pub shift: f32,
    /// Per-feature weight scale; must be positive.
    pub alpha: f32,
}

impl BnsRawParams {
    /// Identity transform with unit alpha.
    pub fn identity() -> Self {
        BnsRawParams {
            bn_shift: 0.0,
            bn_scale: 1.0,
            scale: 1.0,
            shift: 0.0,
            alpha: 1.0,
        }
    }

    /// The unfused pipeline evaluated in f64: alpha scales the accumulator,
    /// then normalization and the learned affine run on top.
    pub fn apply_unfused(&self, acc: f64) -> f64 {
        self.apply_normalized(f64::from(self.alpha) * acc)
    }

    /// Normalization and the learned affine only, for inputs that already
    /// carry alpha (e.g. convolution with `alpha * codes` filters).
    pub fn apply_normalized(&self, u: f64) -> f64 {
        let normalized = (u - f64::from(self.bn_shift)) / f64::from(self.bn_scale);
        f64::from(self.scale) * normalized + f64::from(self.shift)
    }
}

/// Merged per-feature scale/shift pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnsFused {
    gammas: Vec<f32>,
    betas: Vec<f32>,
}

impl BnsFused {
    pub fn from_parts(gammas: Vec<f32>, betas: Vec<f32>) -> Result<Self, BnsError> {
        assert_eq!(gammas.len(), betas.len());
        for (f, (g, b)) in gammas.iter().zip(&betas).enumerate() {
            if !g.is_finite() || !b.is_finite() {
                return Err(BnsError::NonFinite(f));
            }
        }
        Ok(BnsFused { gammas, betas })
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn gamma(&self, feature: usize) -> f32 {
        self.gammas[feature]
    }

    pub fn beta(&self, feature: usize) -> f32 {
        self.betas[feature]
    }

    /// `gamma_f * acc + beta_f` in 32-bit float arithmetic.
    pub fn apply(&self, feature: usize, acc: i64) -> f32 {
        self.gammas[feature] * acc as f32 + self.betas[feature]
    }
}

/// Merge normalization, learned scale/shift, and alpha into per-feature
/// (gamma, beta) pairs.
pub fn fuse(raw: &[BnsRawParams]) -> Result<BnsFused, BnsError> {
    let mut gammas = Vec::with_capacity(raw.len());
    let mut betas = Vec::with_capacity(raw.len());
    for (f, p) in raw.iter().enumerate() {
        if p.bn_scale == 0.0 {
            return Err(BnsError::SingularScale(f));
        }
        if p.alpha <= 0.0 || p.alpha.is_nan() {
            return Err(BnsError::NonPositiveAlpha(f, p.alpha));
        }
        let ratio = p.scale / p.bn_scale;
        gammas.push(ratio * p.alpha);
        betas.push(p.shift - ratio * p.bn_shift);
    }
    BnsFused::from_parts(gammas, betas)
}

/// Fold the previous layer's activation-code scale into gamma, so the fused
/// stage can consume raw integer accumulators. Bipolar (1-bit) inputs decode
/// to +/-1 already and fold as identity.
pub fn fold_input_scale(fused: &BnsFused, input_format: ActFormat) -> BnsFused {
    if input_format.is_bipolar() {
        return fused.clone();
    }
    let l = input_format.levels() as f32;
    BnsFused {
        gammas: fused.gammas.iter().map(|g| g / l).collect(),
        betas: fused.betas.clone(),
    }
}
