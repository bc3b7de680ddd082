//! Pre-run measurement datasets.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{CoreError, Result};

/// Measurements of the real system taken before the control design:
/// augmented states paired with the per-dimension dynamics increments
/// `x_{t+1} - f(x_t, u_t)`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PriorData {
    /// Augmented states `(x, u)`, in arrival order.
    pub inputs: Vec<DVector<f64>>,
    /// One increment per state dimension, each of length `inputs.len()`.
    pub targets: Vec<Vec<f64>>,
}

impl PriorData {
    pub fn empty(state_dim: usize) -> Self {
        PriorData {
            inputs: Vec::new(),
            targets: vec![Vec::new(); state_dim],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.targets.iter().enumerate() {
            if t.len() != self.inputs.len() {
                return Err(CoreError::invalid(format!(
                    "target dimension {} has {} values for {} inputs",
                    i,
                    t.len(),
                    self.inputs.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::invalid(format!(
                    "non-finite target in dimension {i}"
                )));
            }
        }
        if let Some(first) = self.inputs.first() {
            if self
                .inputs
                .iter()
                .any(|x| x.len() != first.len() || x.iter().any(|v| !v.is_finite()))
            {
                return Err(CoreError::invalid(
                    "prior inputs must share one augmented-state dimension and be finite",
                ));
            }
        }
        Ok(())
    }
}
