//! The fixed standard-normal sample set behind one optimization run.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::rng::rng_from_seed;

/// Standard-normal draws indexed by (trajectory, step, state dimension,
/// channel), with one channel for the sampled-function draw and one for the
/// process noise. Generated once per run and held fixed while the
/// parameters are optimized; trajectory blocks are laid out so that the
/// first `m` trajectories of a larger set form a valid smaller set.
#[derive(Debug, Clone, Serialize)]
pub struct RolloutDraws {
    zeta: Vec<f64>,
    trajectories: usize,
    horizon: usize,
    state_dim: usize,
    pub seed: u64,
}

pub const CHANNEL_FUNCTION: usize = 0;
pub const CHANNEL_NOISE: usize = 1;

impl RolloutDraws {
    pub fn sample(trajectories: usize, horizon: usize, state_dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let count = trajectories * horizon * state_dim * 2;
        let zeta = (0..count)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        RolloutDraws {
            zeta,
            trajectories,
            horizon,
            state_dim,
            seed,
        }
    }

    /// Builds a draw set from explicit values (length must be a whole
    /// number of trajectory blocks). Mostly useful for deterministic tests.
    pub fn from_values(
        values: Vec<f64>,
        horizon: usize,
        state_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let stride = horizon * state_dim * 2;
        if stride == 0 || values.len() % stride != 0 {
            return Err(CoreError::invalid(format!(
                "{} values do not fill trajectory blocks of {stride}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("non-finite draw value"));
        }
        Ok(RolloutDraws {
            trajectories: values.len() / stride,
            zeta: values,
            horizon,
            state_dim,
            seed,
        })
    }

    pub fn trajectories(&self) -> usize {
        self.trajectories
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn zeta(&self, trajectory: usize, step: usize, dim: usize, channel: usize) -> f64 {
        debug_assert!(channel < 2);
        let idx = ((trajectory * self.horizon + step) * self.state_dim + dim) * 2 + channel;
        self.zeta[idx]
    }

    /// The draws consumed by one trajectory.
    pub fn trajectory(&self, trajectory: usize) -> Result<TrajectoryDraws<'_>> {
        if trajectory >= self.trajectories {
            return Err(CoreError::invalid(format!(
                "trajectory index {trajectory} out of {}",
                self.trajectories
            )));
        }
        let stride = self.horizon * self.state_dim * 2;
        Ok(TrajectoryDraws {
            zeta: &self.zeta[trajectory * stride..(trajectory + 1) * stride],
            state_dim: self.state_dim,
            horizon: self.horizon,
        })
    }
}

/// View of one trajectory's slice of the draw set.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryDraws<'a> {
    zeta: &'a [f64],
    state_dim: usize,
    horizon: usize,
}

impl<'a> TrajectoryDraws<'a> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    #[inline]
    pub fn function_draw(&self, step: usize, dim: usize) -> f64 {
        self.zeta[(step * self.state_dim + dim) * 2 + CHANNEL_FUNCTION]
    }

    #[inline]
    pub fn noise_draw(&self, step: usize, dim: usize) -> f64 {
        self.zeta[(step * self.state_dim + dim) * 2 + CHANNEL_NOISE]
    }
}
