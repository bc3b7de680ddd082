//! Monte Carlo evaluation on the true system.
//!
//! Everything here sees the ground-truth dynamics gap, which the design
//! pipeline never does: it exists to check how parameters chosen from the
//! probabilistic model behave on the system they were designed for.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::PriorData;
use crate::error::{CoreError, Result};
use crate::laws::{data_independent_counterpart, ControlLawDef, LearnerDataset};
use crate::rng::{derive_seed, rng_from_seed};
use crate::saa::StageCost;
use crate::world::{PriorModel, Trajectory, DIVERGENCE_GUARD};

/// The ground-truth dynamics gap `g(x, u)`, known only to the evaluator.
/// Every variant is continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UnknownDynamics {
    Zero,
    /// `g(x, u) = gain * x` per dimension.
    LinearState { gain: f64 },
    /// `g(x, u) = amplitude * sin(frequency * x)` per dimension; smooth and
    /// bounded by `|amplitude|`.
    Sine { amplitude: f64, frequency: f64 },
}

impl UnknownDynamics {
    pub fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        match self {
            UnknownDynamics::Zero => DVector::zeros(x.len()),
            UnknownDynamics::LinearState { gain } => x * *gain,
            UnknownDynamics::Sine {
                amplitude,
                frequency,
            } => x.map(|v| amplitude * (frequency * v).sin()),
        }
    }
}

/// The true closed-loop benchmark system: prior model plus the dynamics
/// gap, noise scale, horizon, initial state, and the cost under which runs
/// are scored.
#[derive(Debug, Clone, Serialize)]
pub struct TrueSystemSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    pub prior_model: PriorModel,
    pub true_dynamics: UnknownDynamics,
    pub process_noise_std: Vec<f64>,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub stage_cost: StageCost,
}

impl TrueSystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.input_dim == 0 || self.horizon == 0 {
            return Err(CoreError::invalid("dimensions and horizon must be positive"));
        }
        if self.process_noise_std.len() != self.state_dim || self.x0.len() != self.state_dim {
            return Err(CoreError::invalid(
                "noise and initial state must have state dimension",
            ));
        }
        self.stage_cost.validate()
    }
}

/// Simulates the true system under `law(theta)` from a seeded noise
/// stream. The law's dataset accumulates the realized measurements
/// (increments `x_{t+1} - f`, conditioned with the process-noise variance),
/// starting from `initial_data`.
pub fn simulate_true_system(
    spec: &TrueSystemSpec,
    law: &ControlLawDef,
    initial_data: &LearnerDataset,
    theta: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    spec.validate()?;
    let n = spec.horizon;
    let nx = spec.state_dim;
    let mut rng = rng_from_seed(seed);
    let mut learner = initial_data.clone();
    let learns = law.law.uses_online_data();

    let mut states = Vec::with_capacity(n + 1);
    let mut inputs = Vec::with_capacity(n);
    let mut g_samples = Vec::with_capacity(n);
    let mut stage_costs = Vec::with_capacity(n + 1);

    let mut x = DVector::from_column_slice(&spec.x0);
    states.push(x.clone());
    for t in 0..n {
        let u = law.law.evaluate(&learner, theta, t, &x)?;
        stage_costs.push(spec.stage_cost.cost(t, &x, &u));

        let f = spec.prior_model.eval(&x, &u);
        let g = spec.true_dynamics.eval(&x, &u);
        let mut next = &f + &g;
        for i in 0..nx {
            let z: f64 = StandardNormal.sample(&mut rng);
            next[i] += spec.process_noise_std[i] * z;
        }

        let magnitude = next.amax();
        if !magnitude.is_finite() || magnitude > DIVERGENCE_GUARD {
            return Err(CoreError::Diverged {
                step: t + 1,
                magnitude,
            });
        }

        if learns {
            let mut x_aug = DVector::zeros(nx + u.len());
            x_aug.rows_mut(0, nx).copy_from(&x);
            x_aug.rows_mut(nx, u.len()).copy_from(&u);
            let measured: Vec<f64> = (0..nx).map(|i| next[i] - f[i]).collect();
            learner.append(x_aug, &measured)?;
        }

        g_samples.push(g.iter().copied().collect());
        inputs.push(u);
        states.push(next.clone());
        x = next;
    }

    let terminal_input = law.law.evaluate(&learner, theta, n, &x)?;
    stage_costs.push(spec.stage_cost.cost(n, &x, &terminal_input));

    Ok(Trajectory {
        states,
        inputs,
        terminal_input,
        g_samples,
        stage_costs,
    })
}

/// One Monte Carlo run's persisted record; summaries are recomputable from
/// these alone.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Total cost; absent when the run diverged.
    pub total_cost: Option<f64>,
    /// Step at which the run diverged, when it did.
    pub diverged_at: Option<usize>,
    /// Per-step tracking error `x_t - r_t`, per dimension.
    pub per_step_error: Vec<Vec<f64>>,
    pub per_step_cost: Vec<f64>,
}

/// Aggregated Monte Carlo statistics. Diverged runs are excluded from the
/// statistics and reported by index.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub requested_runs: usize,
    pub completed_runs: usize,
    pub diverged_runs: Vec<usize>,
    pub mean_total_cost: f64,
    /// Sample standard deviation (zero for a single run).
    pub std_total_cost: f64,
    pub per_step_error_mean: Vec<Vec<f64>>,
    pub per_step_error_std: Vec<Vec<f64>>,
    pub seed: u64,
    pub records: Vec<RunRecord>,
}

impl McSummary {
    fn aggregate(requested: usize, seed: u64, records: Vec<RunRecord>, spec: &TrueSystemSpec) -> Self {
        let completed: Vec<&RunRecord> = records.iter().filter(|r| r.total_cost.is_some()).collect();
        let n = completed.len();
        let costs: Vec<f64> = completed.iter().map(|r| r.total_cost.unwrap()).collect();
        let mean = if n > 0 {
            costs.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let std = if n > 1 {
            (costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };

        let steps = spec.horizon + 1;
        let nx = spec.state_dim;
        let mut err_mean = vec![vec![0.0; nx]; steps];
        let mut err_std = vec![vec![0.0; nx]; steps];
        if n > 0 {
            for t in 0..steps {
                for d in 0..nx {
                    let mut s = 0.0;
                    for r in &completed {
                        s += r.per_step_error[t][d];
                    }
                    let mu = s / n as f64;
                    err_mean[t][d] = mu;
                    if n > 1 {
                        let mut v = 0.0;
                        for r in &completed {
                            let e = r.per_step_error[t][d] - mu;
                            v += e * e;
                        }
                        err_std[t][d] = (v / (n - 1) as f64).sqrt();
                    }
                }
            }
        }

        McSummary {
            requested_runs: requested,
            completed_runs: n,
            diverged_runs: records
                .iter()
                .filter(|r| r.total_cost.is_none())
                .map(|r| r.run)
                .collect(),
            mean_total_cost: mean,
            std_total_cost: std,
            per_step_error_mean: err_mean,
            per_step_error_std: err_std,
            seed,
            records,
        }
    }
}

fn run_once(
    spec: &TrueSystemSpec,
    law: &ControlLawDef,
    initial_data: &LearnerDataset,
    theta: &[f64],
    run: usize,
    seed: u64,
) -> Result<RunRecord> {
    let run_seed = derive_seed(seed, run as u64);
    let reference = spec.stage_cost.reference(spec.state_dim);
    match simulate_true_system(spec, law, initial_data, theta, run_seed) {
        Ok(traj) => {
            let per_step_error = traj
                .states
                .iter()
                .enumerate()
                .map(|(t, x)| {
                    let r = reference.at(t);
                    (0..spec.state_dim).map(|d| x[d] - r[d]).collect()
                })
                .collect();
            Ok(RunRecord {
                run,
                seed: run_seed,
                total_cost: Some(traj.total_cost()),
                diverged_at: None,
                per_step_error,
                per_step_cost: traj.stage_costs.clone(),
            })
        }
        Err(CoreError::Diverged { step, .. }) => Ok(RunRecord {
            run,
            seed: run_seed,
            total_cost: None,
            diverged_at: Some(step),
            per_step_error: Vec::new(),
            per_step_cost: Vec::new(),
        }),
        Err(other) => Err(other),
    }
}

/// Repeated seeded simulation of the true system under one law.
pub fn monte_carlo(
    spec: &TrueSystemSpec,
    law: &ControlLawDef,
    initial_data: &LearnerDataset,
    theta: &[f64],
    n_runs: usize,
    seed: u64,
) -> Result<McSummary> {
    if n_runs == 0 {
        return Err(CoreError::invalid("need at least one run"));
    }
    let mut records = Vec::with_capacity(n_runs);
    for run in 0..n_runs {
        records.push(run_once(spec, law, initial_data, theta, run, seed)?);
    }
    Ok(McSummary::aggregate(n_runs, seed, records, spec))
}

/// Paired statistics of the per-run cost difference
/// (baseline minus anticipating), over runs where both arms completed.
#[derive(Debug, Clone, Serialize)]
pub struct PairedDifference {
    pub pairs: usize,
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
}

/// Outcome of the anticipating-vs-counterpart comparison.
#[derive(Debug, Clone, Serialize)]
pub struct LawComparison {
    pub anticipating: McSummary,
    pub baseline: McSummary,
    pub paired: PairedDifference,
}

/// Paired Monte Carlo comparison: run `i` of both arms consumes the same
/// noise realization. The anticipating arm runs `law(theta_antler)`; the
/// baseline arm runs the data-independent counterpart frozen at
/// `initial_data` with `theta_baseline`.
pub fn compare_laws(
    spec: &TrueSystemSpec,
    law: &ControlLawDef,
    initial_data: &LearnerDataset,
    theta_antler: &[f64],
    theta_baseline: &[f64],
    n_runs: usize,
    seed: u64,
) -> Result<LawComparison> {
    if !law.param_box.contains(theta_antler) || !law.param_box.contains(theta_baseline) {
        return Err(CoreError::invalid(
            "both parameter vectors must lie inside the parameter box",
        ));
    }
    let counterpart = data_independent_counterpart(law, initial_data);
    let anticipating = monte_carlo(spec, law, initial_data, theta_antler, n_runs, seed)?;
    let baseline = monte_carlo(spec, &counterpart, initial_data, theta_baseline, n_runs, seed)?;

    let mut diffs = Vec::with_capacity(n_runs);
    for (a, b) in anticipating.records.iter().zip(&baseline.records) {
        if let (Some(ca), Some(cb)) = (a.total_cost, b.total_cost) {
            diffs.push(cb - ca);
        }
    }
    let n = diffs.len();
    let mean = if n > 0 {
        diffs.iter().sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let std = if n > 1 {
        (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let standard_error = if n > 0 { std / (n as f64).sqrt() } else { f64::NAN };

    Ok(LawComparison {
        anticipating,
        baseline,
        paired: PairedDifference {
            pairs: n,
            mean,
            std,
            standard_error,
        },
    })
}

/// Collects pre-run measurements of the true system under the regulating
/// law `u = -gain * x`, recording augmented states and the realized
/// dynamics increments. This is how the bundled benchmark's initial
/// dataset is produced.
pub fn collect_prior_measurements(
    spec: &TrueSystemSpec,
    regulation_gain: f64,
    n_measurements: usize,
    seed: u64,
) -> Result<PriorData> {
    spec.validate()?;
    if spec.input_dim != spec.state_dim {
        return Err(CoreError::invalid(
            "regulate-to-origin collection needs input_dim == state_dim",
        ));
    }
    let nx = spec.state_dim;
    let mut rng = rng_from_seed(seed);
    let mut data = PriorData::empty(nx);
    let mut x = DVector::from_column_slice(&spec.x0);
    for t in 0..n_measurements {
        let u = -&x * regulation_gain;
        let f = spec.prior_model.eval(&x, &u);
        let g = spec.true_dynamics.eval(&x, &u);
        let mut next = &f + &g;
        for i in 0..nx {
            let z: f64 = StandardNormal.sample(&mut rng);
            next[i] += spec.process_noise_std[i] * z;
        }
        let magnitude = next.amax();
        if !magnitude.is_finite() || magnitude > DIVERGENCE_GUARD {
            return Err(CoreError::Diverged {
                step: t + 1,
                magnitude,
            });
        }
        let mut x_aug = DVector::zeros(2 * nx);
        x_aug.rows_mut(0, nx).copy_from(&x);
        x_aug.rows_mut(nx, nx).copy_from(&u);
        data.inputs.push(x_aug);
        for i in 0..nx {
            data.targets[i].push(next[i] - f[i]);
        }
        x = next;
    }
    Ok(data)
}
