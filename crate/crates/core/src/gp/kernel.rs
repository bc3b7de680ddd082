//! Squared-exponential kernel over augmented states.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Which coordinates of an augmented state `(x, u)` the kernel reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputProjection {
    /// Compare full augmented states; both arguments must have equal length.
    Full,
    /// Compare only the leading `state_dim` coordinates, so queries may be
    /// either bare states or full augmented states.
    StateOnly { state_dim: usize },
}

impl InputProjection {
    fn width(&self, full_len: usize) -> usize {
        match self {
            InputProjection::Full => full_len,
            InputProjection::StateOnly { state_dim } => *state_dim,
        }
    }
}

/// Squared-exponential kernel `k(a, b) = sigma_k^2 * exp(-|pi(a)-pi(b)|^2 / (2 l))`,
/// where `l` scales the squared distance directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    signal_variance: f64,
    lengthscale: f64,
    projection: InputProjection,
}

impl KernelSpec {
    /// A `signal_variance` of exactly zero is permitted and denotes the
    /// degenerate kernel (the zero function is the only sample).
    pub fn new(signal_variance: f64, lengthscale: f64, projection: InputProjection) -> Result<Self> {
        if !signal_variance.is_finite() || signal_variance < 0.0 {
            return Err(CoreError::invalid(format!(
                "signal variance must be finite and >= 0, got {signal_variance}"
            )));
        }
        if !lengthscale.is_finite() || lengthscale <= 0.0 {
            return Err(CoreError::invalid(format!(
                "lengthscale must be finite and > 0, got {lengthscale}"
            )));
        }
        Ok(KernelSpec {
            signal_variance,
            lengthscale,
            projection,
        })
    }

    pub fn squared_exponential(signal_variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(signal_variance, lengthscale, InputProjection::Full)
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn projection(&self) -> InputProjection {
        self.projection
    }

    pub fn with_hyperparameters(&self, signal_variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(signal_variance, lengthscale, self.projection)
    }

    /// Kernel evaluation with argument validation.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_query(a)?;
        self.check_query(b)?;
        if matches!(self.projection, InputProjection::Full) && a.len() != b.len() {
            return Err(CoreError::invalid(format!(
                "kernel arguments of unequal length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn check_query(&self, q: &[f64]) -> Result<()> {
        let w = self.projection.width(q.len());
        if q.len() < w {
            return Err(CoreError::invalid(format!(
                "kernel input of length {} is shorter than the projected width {}",
                q.len(),
                w
            )));
        }
        if q[..w].iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("non-finite kernel input"));
        }
        Ok(())
    }

    /// The slice of `q` the kernel actually reads.
    #[inline]
    pub(crate) fn projected<'a>(&self, q: &'a [f64]) -> &'a [f64] {
        &q[..self.projection.width(q.len())]
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.projection.width(a.len().min(b.len()));
        let mut d2 = 0.0;
        for i in 0..w {
            let d = a[i] - b[i];
            d2 += d * d;
        }
        self.signal_variance * (-d2 / (2.0 * self.lengthscale)).exp()
    }
}
