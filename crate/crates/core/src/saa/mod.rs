//! Sample-average approximation of the expected finite-horizon cost, and
//! its minimization over the box of admissible parameters.
//!
//! The draw set is held fixed across all parameter evaluations, so the
//! sample-average cost is a deterministic, differentiable function of the
//! parameters and finite differences of it are well defined.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::laws::{ControlLawDef, ReferenceProfile};
use crate::rng::{derive_seed, rng_from_seed};
use crate::world::{RolloutDraws, WorldModel};

/// Nonnegative, continuously differentiable stage cost `c_t(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StageCost {
    /// `|x - r_t|^2 + input_weight * |u|^2`.
    QuadraticTracking {
        reference: ReferenceProfile,
        input_weight: f64,
    },
    /// `state_weight * |x|^2 + input_weight * |u|^2`.
    QuadraticRegulation {
        state_weight: f64,
        input_weight: f64,
    },
}

impl StageCost {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StageCost::QuadraticTracking { input_weight, .. } => *input_weight >= 0.0,
            StageCost::QuadraticRegulation {
                state_weight,
                input_weight,
            } => *state_weight >= 0.0 && *input_weight >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::invalid("cost weights must be nonnegative"))
        }
    }

    pub fn cost(&self, step: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match self {
            StageCost::QuadraticTracking {
                reference,
                input_weight,
            } => {
                let r = reference.at(step);
                let mut c = 0.0;
                for i in 0..x.len() {
                    let e = x[i] - r[i];
                    c += e * e;
                }
                c + input_weight * u.norm_squared()
            }
            StageCost::QuadraticRegulation {
                state_weight,
                input_weight,
            } => state_weight * x.norm_squared() + input_weight * u.norm_squared(),
        }
    }

    /// The reference this cost tracks; the zero trajectory for regulation
    /// costs. Used for error reporting.
    pub fn reference(&self, dim: usize) -> ReferenceProfile {
        match self {
            StageCost::QuadraticTracking { reference, .. } => reference.clone(),
            StageCost::QuadraticRegulation { .. } => ReferenceProfile::Zero { dim },
        }
    }
}

/// The sample-average design problem: world, law, cost, initial state, and
/// the fixed draw set (of which the first `sample_count` trajectories are
/// in use).
#[derive(Debug, Clone)]
pub struct SaaProblem {
    pub world: WorldModel,
    pub law: ControlLawDef,
    pub stage_cost: StageCost,
    pub x0: DVector<f64>,
    pub draws: Arc<RolloutDraws>,
    pub sample_count: usize,
}

impl SaaProblem {
    pub fn new(
        world: WorldModel,
        law: ControlLawDef,
        stage_cost: StageCost,
        x0: DVector<f64>,
        draws: Arc<RolloutDraws>,
        sample_count: usize,
    ) -> Result<Self> {
        stage_cost.validate()?;
        if sample_count == 0 || sample_count > draws.trajectories() {
            return Err(CoreError::invalid(format!(
                "sample count {} outside the drawn set of {}",
                sample_count,
                draws.trajectories()
            )));
        }
        if draws.horizon() < world.system.horizon || draws.state_dim() != world.system.state_dim {
            return Err(CoreError::invalid(
                "draw set shape does not cover the system horizon and state dimension",
            ));
        }
        Ok(SaaProblem {
            world,
            law,
            stage_cost,
            x0,
            draws,
            sample_count,
        })
    }

    /// The same problem over a prefix of the draw set.
    pub fn with_sample_count(&self, sample_count: usize) -> Result<Self> {
        let mut p = self.clone();
        if sample_count == 0 || sample_count > self.draws.trajectories() {
            return Err(CoreError::invalid(format!(
                "sample count {} outside the drawn set of {}",
                sample_count,
                self.draws.trajectories()
            )));
        }
        p.sample_count = sample_count;
        Ok(p)
    }

    /// `(1/M) sum_m sum_t c_t(x_t^m, u_t^m(theta))` over the fixed draws.
    /// Trajectories are accumulated in index order, so the value is
    /// bit-stable.
    pub fn saa_cost(&self, theta: &[f64]) -> Result<f64> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("non-finite parameter vector"));
        }
        let mut total = 0.0;
        for m in 0..self.sample_count {
            let traj = self
                .world
                .rollout_sample(
                    &self.law,
                    theta,
                    &self.stage_cost,
                    self.draws.trajectory(m)?,
                    &self.x0,
                )
                .map_err(|e| match e {
                    CoreError::Diverged { step, .. } => CoreError::RolloutDiverged {
                        trajectory: m,
                        step,
                    },
                    other => other,
                })?;
            total += traj.total_cost();
        }
        Ok(total / self.sample_count as f64)
    }

    /// Central finite differences of the sample-average cost with step
    /// `1e-6 * max(1, |theta_i|)` per coordinate, over the same fixed
    /// draws. Falls back to a one-sided difference when a probe point
    /// diverges; errors when both sides do.
    pub fn saa_cost_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut grad = Vec::with_capacity(theta.len());
        let mut base: Option<f64> = None;
        for i in 0..theta.len() {
            let h = 1e-6 * theta[i].abs().max(1.0);
            let mut plus = theta.to_vec();
            plus[i] += h;
            let mut minus = theta.to_vec();
            minus[i] -= h;
            let fp = self.saa_cost(&plus);
            let fm = self.saa_cost(&minus);
            let g = match (fp, fm) {
                (Ok(fp), Ok(fm)) => (fp - fm) / (2.0 * h),
                (Ok(fp), Err(_)) => {
                    let f0 = self.base_cost(&mut base, theta)?;
                    (fp - f0) / h
                }
                (Err(_), Ok(fm)) => {
                    let f0 = self.base_cost(&mut base, theta)?;
                    (f0 - fm) / h
                }
                (Err(e), Err(_)) => {
                    return Err(CoreError::numeric(format!(
                        "both finite-difference probes diverged in coordinate {i}: {e}"
                    )))
                }
            };
            grad.push(g);
        }
        Ok(grad)
    }

    fn base_cost(&self, cache: &mut Option<f64>, theta: &[f64]) -> Result<f64> {
        if let Some(v) = *cache {
            return Ok(v);
        }
        let v = self.saa_cost(theta)?;
        *cache = Some(v);
        Ok(v)
    }
}

/// Optimizer configuration. The defaults match the documented design:
/// Armijo backtracking with c = 1e-4 and shrink 0.5, box projection, at
/// most 100 iterations per start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeSettings {
    pub n_starts: usize,
    pub max_iterations: usize,
    /// Stop when both the step and the cost improvement fall below
    /// `theta_tol` and `cost_tol * (1 + cost)`.
    pub theta_tol: f64,
    pub cost_tol: f64,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings {
            n_starts: 8,
            max_iterations: 100,
            theta_tol: 1e-5,
            cost_tol: 1e-8,
        }
    }
}

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 45;

/// One descent start: where it began, where it stopped, and the monotone
/// cost history along the way.
#[derive(Debug, Clone, Serialize)]
pub struct StartRecord {
    pub initial: Vec<f64>,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub cost_history: Vec<f64>,
    /// Set when the start was abandoned (divergent initial point or
    /// un-evaluable gradient).
    pub failed: Option<String>,
}

/// The chosen parameters plus the full multi-start record.
#[derive(Debug, Clone, Serialize)]
pub struct OptResult {
    pub theta_star: Vec<f64>,
    pub cost_star: f64,
    pub gradient_norm: f64,
    pub starts: Vec<StartRecord>,
}

/// Minimizes the sample-average cost over the parameter box by projected
/// gradient descent with Armijo backtracking from `n_starts` uniformly
/// sampled starting points (plus any `extra_starts`). Ties on final cost
/// break by gradient norm, then lexicographically.
pub fn antler_optimize(
    problem: &SaaProblem,
    settings: &OptimizeSettings,
    seed: u64,
    extra_starts: &[Vec<f64>],
) -> Result<OptResult> {
    let bx = &problem.law.param_box;
    if settings.n_starts == 0 && extra_starts.is_empty() {
        return Err(CoreError::invalid("need at least one start"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let mut starts: Vec<Vec<f64>> = (0..settings.n_starts)
        .map(|_| bx.sample_uniform(&mut rng))
        .collect();
    for extra in extra_starts {
        starts.push(bx.project(extra));
    }

    let mut records = Vec::with_capacity(starts.len());
    for start in &starts {
        records.push(descend(problem, settings, start));
    }

    let best = records
        .iter()
        .filter(|r| r.failed.is_none())
        .min_by(|a, b| {
            (a.cost, a.gradient_norm, &a.theta)
                .partial_cmp(&(b.cost, b.gradient_norm, &b.theta))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .cloned();

    match best {
        Some(best) => Ok(OptResult {
            theta_star: best.theta.clone(),
            cost_star: best.cost,
            gradient_norm: best.gradient_norm,
            starts: records,
        }),
        None => {
            let reasons: Vec<String> = records
                .iter()
                .filter_map(|r| r.failed.clone())
                .collect();
            Err(CoreError::OptimizationFailed(format!(
                "all {} starts failed: {}",
                records.len(),
                reasons.join("; ")
            )))
        }
    }
}

fn descend(problem: &SaaProblem, settings: &OptimizeSettings, start: &[f64]) -> StartRecord {
    let bx = &problem.law.param_box;
    let theta0 = bx.project(start);
    let failed_record = |msg: String| StartRecord {
        initial: theta0.clone(),
        theta: theta0.clone(),
        cost: f64::INFINITY,
        iterations: 0,
        converged: false,
        gradient_norm: f64::INFINITY,
        cost_history: Vec::new(),
        failed: Some(msg),
    };

    let mut theta = theta0.clone();
    let mut cost = match problem.saa_cost(&theta) {
        Ok(c) => c,
        Err(e) => return failed_record(format!("initial point: {e}")),
    };
    let mut history = vec![cost];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..settings.max_iterations {
        iterations += 1;
        let grad = match problem.saa_cost_gradient(&theta) {
            Ok(g) => g,
            Err(e) => return failed_record(format!("gradient at iteration {iterations}: {e}")),
        };

        let mut accepted: Option<(Vec<f64>, f64)> = None;
        let mut alpha = step;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t - alpha * g)
                .collect();
            let candidate = bx.project(&candidate);
            let decrease: f64 = grad
                .iter()
                .zip(candidate.iter().zip(&theta))
                .map(|(g, (c, t))| g * (c - t))
                .sum();
            if candidate == theta {
                break; // projection absorbed the whole step: stationary
            }
            match problem.saa_cost(&candidate) {
                Ok(c) if c <= cost + ARMIJO_C * decrease => {
                    accepted = Some((candidate, c));
                    break;
                }
                _ => alpha *= ARMIJO_SHRINK,
            }
        }

        match accepted {
            None => {
                converged = true; // no descent direction within the box
                break;
            }
            Some((next, next_cost)) => {
                let delta: f64 = next
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let improvement = cost - next_cost;
                theta = next;
                cost = next_cost;
                history.push(cost);
                step = (alpha * 2.0).clamp(1e-12, 1e3);
                if delta <= settings.theta_tol
                    && improvement <= settings.cost_tol * (1.0 + cost.abs())
                {
                    converged = true;
                    break;
                }
            }
        }
    }

    let gradient_norm = problem
        .saa_cost_gradient(&theta)
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(f64::INFINITY);

    StartRecord {
        initial: theta0,
        theta,
        cost,
        iterations,
        converged,
        gradient_norm,
        cost_history: history,
        failed: None,
    }
}

/// One row of the sample-size study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub sample_count: usize,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub wall_time_s: f64,
}

/// Runs the optimizer over a nondecreasing list of sample counts, reusing
/// prefixes of one master draw set so rows differ only through how many
/// trajectories they average. Each row uses the same optimizer seed.
pub fn convergence_study(
    problem: &SaaProblem,
    m_list: &[usize],
    settings: &OptimizeSettings,
    seed: u64,
) -> Result<Vec<StudyRow>> {
    if m_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(CoreError::invalid("sample counts must be nondecreasing"));
    }
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let sub = problem.with_sample_count(m)?;
        let t0 = Instant::now();
        let result = antler_optimize(&sub, settings, seed, &[])?;
        rows.push(StudyRow {
            sample_count: m,
            theta: result.theta_star,
            cost: result.cost_star,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
