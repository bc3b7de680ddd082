//! Reference trajectories for tracking tasks.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// The trajectory a tracking controller is asked to follow. Profiles apply
/// the same scalar signal to every state dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReferenceProfile {
    Zero { dim: usize },
    Constant { values: Vec<f64> },
    /// `amplitude * sin(2 pi t / period + phase)` per coordinate.
    Sinusoid {
        dim: usize,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
}

impl ReferenceProfile {
    pub fn at(&self, step: usize) -> DVector<f64> {
        match self {
            ReferenceProfile::Zero { dim } => DVector::zeros(*dim),
            ReferenceProfile::Constant { values } => DVector::from_vec(values.clone()),
            ReferenceProfile::Sinusoid {
                dim,
                amplitude,
                period,
                phase,
            } => {
                let v = amplitude
                    * (2.0 * std::f64::consts::PI * step as f64 / period + phase).sin();
                DVector::from_element(*dim, v)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ReferenceProfile::Zero { dim } => *dim,
            ReferenceProfile::Constant { values } => values.len(),
            ReferenceProfile::Sinusoid { dim, .. } => *dim,
        }
    }
}
