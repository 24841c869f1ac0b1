//! Zeroing thresholds for reconstructed matrix elements.
//!
//! Finite data leaves small nonzero values where the true system has exact
//! zeros, so reconstructed elements below a threshold are set to zero. The
//! default is relative: a fraction of the largest magnitude in the block
//! being thresholded, which separates a near-zero group from a genuine
//! nonzero group without absolute calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of the block maximum used by [`ThresholdRule::default`].
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 0.25;

/// How to turn a block of estimates into an absolute zeroing threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum ThresholdRule {
    /// Threshold = value × (largest magnitude in the reference block).
    Relative(f64),
    /// Threshold used as-is.
    Absolute(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Relative(DEFAULT_RELATIVE_THRESHOLD)
    }
}

impl ThresholdRule {
    /// Resolve against the largest magnitude of the reference block.
    pub fn resolve(&self, reference_max_abs: f64) -> f64 {
        match *self {
            ThresholdRule::Relative(f) => f * reference_max_abs,
            ThresholdRule::Absolute(a) => a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            ThresholdRule::Relative(f) => f,
            ThresholdRule::Absolute(a) => a,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "threshold must be finite and nonnegative, got {v}"
            )));
        }
        if let ThresholdRule::Relative(f) = *self {
            if f >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "relative threshold must be below 1, got {f}"
                )));
            }
        }
        Ok(())
    }
}
