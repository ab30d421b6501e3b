//! Recursive nonlinear least-squares adaptation of a parameter subset.
//!
//! Each step linearises the stacked model outputs around the current
//! parameters and applies an extended-Kalman measurement update with a
//! forgetting factor:
//!
//! ```text
//! K = P Hᵀ (H P Hᵀ + r I)⁻¹
//! P ← (P − K H P + ε I) / λ        then P ← (P + Pᵀ) / 2
//! θ ← θ + K (Y − Ŷ)
//! ```

mod online;
mod rls;
mod target;

use serde::Serialize;

use crate::error::{Error, Result};

pub use online::{run_online, AdaptationReport, AdaptationSummary, StepRecord, Timing};
pub use rls::{adapt_step, init, AdapterState, StackedPair};
pub use target::{AdaptTarget, ModelTarget};

/// Encoder recurrent matrices.
pub const DEFAULT_SUBSET: [&str; 3] = ["encoder.U_z", "encoder.U_r", "encoder.U_h"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdapterConfig {
    /// Initial covariance scale, `P₀ = p0·I`.
    pub p0: f64,
    /// Forgetting factor.
    pub lambda: f64,
    /// Measurement noise variance.
    pub r: f64,
    /// Covariance inflation added each step.
    pub epsilon: f64,
    /// Number of stacked observations per step.
    pub k: usize,
    /// Parameter groups to adapt.
    pub subset: Vec<String>,
    /// Predicted steps compared against ground truth per observation.
    pub horizon: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            p0: 0.01,
            lambda: 0.999,
            r: 0.95,
            epsilon: 0.0,
            k: 1,
            subset: DEFAULT_SUBSET.iter().map(|s| s.to_string()).collect(),
            horizon: 1,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("p0", self.p0), ("lambda", self.lambda), ("r", self.r)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if self.k == 0 || self.horizon == 0 {
            return Err(Error::Config("k and horizon must be positive".into()));
        }
        if self.subset.is_empty() {
            return Err(Error::Config("adaptation subset is empty".into()));
        }
        Ok(())
    }
}
