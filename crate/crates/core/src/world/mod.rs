//! Closed-loop trajectory sampling under an uncertain dynamics model.
//!
//! The unknown dynamics component is drawn sequentially from a GP: at each
//! step the one-step predictive distribution is sampled, and the draw is
//! conditioned back into the "world" GP so that the sampled function stays
//! deterministic wherever it has been evaluated. The control law's own
//! model sees only realizable measurements (increments contaminated by
//! process noise, conditioned with the noise variance on the Gram
//! diagonal); the world GP conditions noiselessly on the pure samples.

mod draws;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use draws::{RolloutDraws, TrajectoryDraws, CHANNEL_FUNCTION, CHANNEL_NOISE};

use crate::data::PriorData;
use crate::error::{CoreError, Result};
use crate::gp::{GpState, KernelSpec};
use crate::laws::{ControlLawDef, LearnerDataset};
use crate::saa::StageCost;

/// States with magnitude beyond this abort a rollout as divergent.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// The known part of the dynamics, selectable by name in configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PriorModel {
    /// `f(x, u) = x + u` (requires matching state and input dimensions).
    SingleIntegrator,
    /// `f(x, u) = x`: no prior knowledge beyond persistence.
    StatePassthrough,
    /// Scalar `f(x, u) = a x + b u`.
    LinearScalar { a: f64, b: f64 },
}

impl PriorModel {
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            PriorModel::SingleIntegrator => x + u,
            PriorModel::StatePassthrough => x.clone(),
            PriorModel::LinearScalar { a, b } => {
                DVector::from_vec(vec![a * x[0] + b * u[0]])
            }
        }
    }
}

/// The uncertain system: prior model, process-noise scale, the GP kernel
/// expressing uncertainty about the unknown dynamics component, and the
/// prediction horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    pub prior_model: PriorModel,
    /// Diagonal of the process-noise standard deviation matrix.
    pub process_noise_std: Vec<f64>,
    pub kernel: KernelSpec,
    pub horizon: usize,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.input_dim == 0 {
            return Err(CoreError::invalid("state and input dimensions must be positive"));
        }
        if self.horizon == 0 {
            return Err(CoreError::invalid("horizon must be positive"));
        }
        if self.process_noise_std.len() != self.state_dim {
            return Err(CoreError::invalid(format!(
                "{} noise entries for state dimension {}",
                self.process_noise_std.len(),
                self.state_dim
            )));
        }
        if self
            .process_noise_std
            .iter()
            .any(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(CoreError::invalid("process noise std must be finite and >= 0"));
        }
        if matches!(self.prior_model, PriorModel::SingleIntegrator) && self.state_dim != self.input_dim {
            return Err(CoreError::invalid(
                "single-integrator prior needs state_dim == input_dim",
            ));
        }
        if matches!(self.prior_model, PriorModel::LinearScalar { .. })
            && (self.state_dim != 1 || self.input_dim != 1)
        {
            return Err(CoreError::invalid("linear scalar prior is one-dimensional"));
        }
        Ok(())
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        self.process_noise_std.iter().map(|s| s * s).collect()
    }
}

/// One sampled (or simulated) closed-loop trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// `x_0 .. x_N`.
    pub states: Vec<DVector<f64>>,
    /// `u_0 .. u_{N-1}`.
    pub inputs: Vec<DVector<f64>>,
    /// `u_N`, entering only the terminal stage cost.
    pub terminal_input: DVector<f64>,
    /// Sampled (or true) unknown-dynamics values per step and dimension.
    pub g_samples: Vec<Vec<f64>>,
    /// `c_0 .. c_N`.
    pub stage_costs: Vec<f64>,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Per-step ensemble statistics across sampled trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct StateEnsemble {
    pub mean: Vec<DVector<f64>>,
    /// Population variance per step and dimension.
    pub variance: Vec<DVector<f64>>,
    pub sample_count: usize,
}

/// Draws one step of the one-step predictive distribution: the sampled
/// unknown-dynamics values and the successor state. The caller is
/// responsible for conditioning `(x_aug, g)` back into the world GPs.
pub fn one_step_sample(
    world_gps: &[GpState],
    spec: &SystemSpec,
    x_aug: &DVector<f64>,
    zeta_function: &[f64],
    zeta_noise: &[f64],
) -> Result<(DVector<f64>, Vec<f64>)> {
    if zeta_function.len() != spec.state_dim || zeta_noise.len() != spec.state_dim {
        return Err(CoreError::invalid("draw vectors must have state dimension"));
    }
    if world_gps.len() != spec.state_dim {
        return Err(CoreError::invalid("one world GP per state dimension"));
    }
    let x = DVector::from_column_slice(&x_aug.as_slice()[..spec.state_dim]);
    let u = DVector::from_column_slice(&x_aug.as_slice()[spec.state_dim..]);
    let mut g = Vec::with_capacity(spec.state_dim);
    for (i, gp) in world_gps.iter().enumerate() {
        let p = gp.posterior(x_aug.as_slice())?;
        g.push(p.mean + p.variance.sqrt() * zeta_function[i]);
    }
    let mut next = spec.prior_model.eval(&x, &u);
    for i in 0..spec.state_dim {
        next[i] += g[i] + spec.process_noise_std[i] * zeta_noise[i];
    }
    Ok((next, g))
}

/// The sampling world: the uncertain system plus everything conditioned
/// before a run starts (pre-run measurements for the world GPs and the
/// learner's initial dataset `D_0`).
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub system: SystemSpec,
    world_prior: Vec<GpState>,
    learner_prior: LearnerDataset,
}

impl WorldModel {
    /// A world with no pre-run measurements: `D_0` is empty and the world
    /// GPs carry the bare prior.
    pub fn new(system: SystemSpec) -> Result<Self> {
        system.validate()?;
        let world_prior = (0..system.state_dim)
            .map(|_| GpState::new(system.kernel, 0.0))
            .collect::<Result<Vec<_>>>()?;
        let learner_prior = LearnerDataset::new(system.kernel, &system.noise_variances())?;
        Ok(WorldModel {
            system,
            world_prior,
            learner_prior,
        })
    }

    /// Seeds the learner's `D_0` with pre-run measurements and, when
    /// `condition_world` is set, also conditions the world GPs on them
    /// (with the measurement-noise variance on those diagonal entries).
    pub fn with_prior_measurements(
        system: SystemSpec,
        prior: &PriorData,
        condition_world: bool,
    ) -> Result<Self> {
        system.validate()?;
        prior.validate()?;
        if !prior.is_empty() && prior.state_dim() != system.state_dim {
            return Err(CoreError::invalid(format!(
                "prior data has {} target dimensions for state dimension {}",
                prior.state_dim(),
                system.state_dim
            )));
        }
        let noise = system.noise_variances();
        let mut world_prior = Vec::with_capacity(system.state_dim);
        for dim in 0..system.state_dim {
            let mut gp = GpState::new(system.kernel, 0.0)?;
            if condition_world {
                for (k, x) in prior.inputs.iter().enumerate() {
                    gp = gp.condition_append_with_noise(
                        x.as_slice(),
                        prior.targets[dim][k],
                        noise[dim],
                    )?;
                }
            }
            world_prior.push(gp);
        }
        let learner_prior = if prior.is_empty() {
            LearnerDataset::new(system.kernel, &noise)?
        } else {
            LearnerDataset::from_measurements(system.kernel, &noise, &prior.inputs, &prior.targets)?
        };
        Ok(WorldModel {
            system,
            world_prior,
            learner_prior,
        })
    }

    /// The learner's initial dataset `D_0`.
    pub fn initial_data(&self) -> &LearnerDataset {
        &self.learner_prior
    }

    pub fn world_prior(&self) -> &[GpState] {
        &self.world_prior
    }

    /// Samples one closed-loop trajectory under `law(theta)`, consuming one
    /// trajectory's slice of the fixed draw set. Deterministic in
    /// `(theta, draws)`.
    pub fn rollout_sample(
        &self,
        law: &ControlLawDef,
        theta: &[f64],
        cost: &StageCost,
        draws: TrajectoryDraws<'_>,
        x0: &DVector<f64>,
    ) -> Result<Trajectory> {
        let n = self.system.horizon;
        let nx = self.system.state_dim;
        if draws.horizon() < n || draws.state_dim() != nx {
            return Err(CoreError::invalid(format!(
                "draw slice of shape ({}, {}) for horizon {} and state dimension {}",
                draws.horizon(),
                draws.state_dim(),
                n,
                nx
            )));
        }
        if x0.len() != nx {
            return Err(CoreError::invalid("initial state has wrong dimension"));
        }

        let mut world = self.world_prior.clone();
        let mut learner = self.learner_prior.clone();
        let learns = law.law.uses_online_data();
        let noise_std = &self.system.process_noise_std;

        let mut states = Vec::with_capacity(n + 1);
        let mut inputs = Vec::with_capacity(n);
        let mut g_samples = Vec::with_capacity(n);
        let mut stage_costs = Vec::with_capacity(n + 1);

        let mut x = x0.clone();
        states.push(x.clone());
        for t in 0..n {
            let u = law.law.evaluate(&learner, theta, t, &x)?;
            stage_costs.push(cost.cost(t, &x, &u));

            let mut x_aug = DVector::zeros(nx + u.len());
            x_aug.rows_mut(0, nx).copy_from(&x);
            x_aug.rows_mut(nx, u.len()).copy_from(&u);

            let mut next = self.system.prior_model.eval(&x, &u);
            let mut g = Vec::with_capacity(nx);
            for (i, gp) in world.iter_mut().enumerate() {
                let (posterior, solve) = gp.posterior_solved(x_aug.as_slice())?;
                let gi =
                    posterior.mean + posterior.variance.sqrt() * draws.function_draw(t, i);
                gp.push_point(x_aug.as_slice(), gi, 0.0, solve)?;
                next[i] += gi + noise_std[i] * draws.noise_draw(t, i);
                g.push(gi);
            }

            let magnitude = next.amax();
            if !magnitude.is_finite() || magnitude > DIVERGENCE_GUARD {
                return Err(CoreError::Diverged {
                    step: t + 1,
                    magnitude,
                });
            }

            if learns {
                let f = self.system.prior_model.eval(&x, &u);
                let measured: Vec<f64> = (0..nx).map(|i| next[i] - f[i]).collect();
                learner.append(x_aug.clone(), &measured)?;
            }

            inputs.push(u);
            g_samples.push(g);
            states.push(next.clone());
            x = next;
        }

        let terminal_input = law.law.evaluate(&learner, theta, n, &x)?;
        stage_costs.push(cost.cost(n, &x, &terminal_input));

        Ok(Trajectory {
            states,
            inputs,
            terminal_input,
            g_samples,
            stage_costs,
        })
    }

    /// Empirical per-step mean and variance of the state across all
    /// trajectories in `draws`.
    pub fn expected_state_estimate(
        &self,
        law: &ControlLawDef,
        theta: &[f64],
        cost: &StageCost,
        draws: &RolloutDraws,
        x0: &DVector<f64>,
    ) -> Result<StateEnsemble> {
        let m = draws.trajectories();
        if m == 0 {
            return Err(CoreError::invalid("need at least one trajectory"));
        }
        let n = self.system.horizon;
        let nx = self.system.state_dim;
        let mut mean = vec![DVector::zeros(nx); n + 1];
        let mut sq = vec![DVector::zeros(nx); n + 1];
        for idx in 0..m {
            let traj = self.rollout_sample(law, theta, cost, draws.trajectory(idx)?, x0)?;
            for (t, s) in traj.states.iter().enumerate() {
                mean[t] += s;
                sq[t] += s.component_mul(s);
            }
        }
        let inv = 1.0 / m as f64;
        let variance = mean
            .iter()
            .zip(&sq)
            .map(|(mu, s2)| {
                let mu = mu * inv;
                (s2 * inv - mu.component_mul(&mu)).map(|v| v.max(0.0))
            })
            .collect();
        for mu in &mut mean {
            *mu *= inv;
        }
        Ok(StateEnsemble {
            mean,
            variance,
            sample_count: m,
        })
    }
}
