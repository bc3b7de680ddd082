//! Parametric online learning-based control laws and their
//! data-independent counterparts.

mod dataset;
mod reference;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use dataset::LearnerDataset;
pub use reference::ReferenceProfile;

use crate::error::{CoreError, Result};

/// The compact box of admissible data-independent parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    bounds: Vec<(f64, f64)>,
}

impl ParamBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(CoreError::invalid("empty parameter box"));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CoreError::invalid(format!(
                    "invalid parameter interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(ParamBox { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.bounds.len()
            && theta
                .iter()
                .zip(&self.bounds)
                .all(|(&t, &(lo, hi))| t >= lo && t <= hi)
    }

    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.bounds)
            .map(|(&t, &(lo, hi))| t.clamp(lo, hi))
            .collect()
    }

    pub fn sample_uniform(&self, rng: &mut crate::rng::Rng) -> Vec<f64> {
        use rand::Rng as _;
        self.bounds
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
            .collect()
    }
}

/// A feedback law `u(D_t, theta, x_t)`: deterministic in its arguments and
/// continuously differentiable in `theta`, `x`, and the dataset points.
pub trait ControlLaw: Send + Sync {
    fn evaluate(
        &self,
        data: &LearnerDataset,
        theta: &[f64],
        step: usize,
        state: &DVector<f64>,
    ) -> Result<DVector<f64>>;

    fn param_dim(&self) -> usize;

    /// Whether the law reads measurements collected online. Rollouts skip
    /// dataset updates for laws that never look at them.
    fn uses_online_data(&self) -> bool {
        true
    }
}

/// A law together with its admissible parameter box.
#[derive(Clone)]
pub struct ControlLawDef {
    pub law: Arc<dyn ControlLaw>,
    pub param_box: ParamBox,
    pub description: String,
}

impl fmt::Debug for ControlLawDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlLawDef")
            .field("description", &self.description)
            .field("param_box", &self.param_box)
            .finish()
    }
}

impl ControlLawDef {
    pub fn new(law: Arc<dyn ControlLaw>, param_box: ParamBox, description: impl Into<String>) -> Result<Self> {
        if param_box.dim() != law.param_dim() {
            return Err(CoreError::invalid(format!(
                "parameter box of dimension {} for a law with {} parameters",
                param_box.dim(),
                law.param_dim()
            )));
        }
        Ok(ControlLawDef {
            law,
            param_box,
            description: description.into(),
        })
    }

    pub fn param_dim(&self) -> usize {
        self.law.param_dim()
    }
}

/// `u = -mu_t(x) - theta_1 (x - theta_2 r_t)` for scalar systems: the GP
/// posterior mean compensates the learned dynamics, `theta_1` acts as a
/// feedback gain and `theta_2` scales the reference.
pub fn gp_mean_tracking_control(
    data: &LearnerDataset,
    theta: &[f64],
    x: f64,
    x_ref: f64,
) -> Result<f64> {
    if theta.len() != 2 {
        return Err(CoreError::invalid(format!(
            "tracking law takes 2 parameters, got {}",
            theta.len()
        )));
    }
    let mean = data.posterior_mean(0, &[x])?;
    Ok(-mean - theta[0] * (x - theta[1] * x_ref))
}

/// Scalar GP-mean tracking law bound to a reference profile.
#[derive(Debug, Clone)]
pub struct GpMeanTrackingLaw {
    pub reference: ReferenceProfile,
}

impl ControlLaw for GpMeanTrackingLaw {
    fn evaluate(
        &self,
        data: &LearnerDataset,
        theta: &[f64],
        step: usize,
        state: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if state.len() != 1 {
            return Err(CoreError::invalid(format!(
                "tracking law is scalar, got state dimension {}",
                state.len()
            )));
        }
        let x_ref = self.reference.at(step)[0];
        let u = gp_mean_tracking_control(data, theta, state[0], x_ref)?;
        Ok(DVector::from_vec(vec![u]))
    }

    fn param_dim(&self) -> usize {
        2
    }
}

/// `u = -Theta x` with the gain matrix read row-major from `theta`.
pub fn linear_feedback_control(
    theta: &[f64],
    input_dim: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if input_dim == 0 || theta.len() % input_dim != 0 {
        return Err(CoreError::invalid(format!(
            "{} gains do not fill an {input_dim}-row matrix",
            theta.len()
        )));
    }
    let state_dim = theta.len() / input_dim;
    if x.len() != state_dim {
        return Err(CoreError::invalid(format!(
            "gain matrix expects state dimension {state_dim}, got {}",
            x.len()
        )));
    }
    let mut u = DVector::zeros(input_dim);
    for i in 0..input_dim {
        let row = &theta[i * state_dim..(i + 1) * state_dim];
        u[i] = -row.iter().zip(x.iter()).map(|(g, xi)| g * xi).sum::<f64>();
    }
    Ok(u)
}

/// Static linear state feedback; ignores the dataset entirely.
#[derive(Debug, Clone)]
pub struct LinearFeedbackLaw {
    pub state_dim: usize,
    pub input_dim: usize,
}

impl ControlLaw for LinearFeedbackLaw {
    fn evaluate(
        &self,
        _data: &LearnerDataset,
        theta: &[f64],
        _step: usize,
        state: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        linear_feedback_control(theta, self.input_dim, state)
    }

    fn param_dim(&self) -> usize {
        self.state_dim * self.input_dim
    }

    fn uses_online_data(&self) -> bool {
        false
    }
}

struct FrozenDataLaw {
    inner: Arc<dyn ControlLaw>,
    frozen: LearnerDataset,
}

impl ControlLaw for FrozenDataLaw {
    fn evaluate(
        &self,
        _data: &LearnerDataset,
        theta: &[f64],
        step: usize,
        state: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.inner.evaluate(&self.frozen, theta, step, state)
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn uses_online_data(&self) -> bool {
        false
    }
}

/// The data-independent counterpart `u^0(theta) = u(D_0, theta, x)`:
/// evaluates the law with the dataset frozen at `initial_data` no matter
/// what is collected later.
pub fn data_independent_counterpart(
    law: &ControlLawDef,
    initial_data: &LearnerDataset,
) -> ControlLawDef {
    ControlLawDef {
        law: Arc::new(FrozenDataLaw {
            inner: Arc::clone(&law.law),
            frozen: initial_data.clone(),
        }),
        param_box: law.param_box.clone(),
        description: format!("{} (data-independent counterpart)", law.description),
    }
}
