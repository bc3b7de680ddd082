//! Exact GP regression state for one output dimension.

use nalgebra::DVector;
use serde::Serialize;

use super::chol::{dot, CholeskyFactor};
use super::kernel::KernelSpec;
use crate::error::{CoreError, Result};

/// Relative jitter added to every Gram diagonal entry so that long
/// sequences of nearly coincident conditioning points stay factorizable.
/// Small enough that noiseless interpolation holds to 1e-10 at unit
/// targets.
pub const GRAM_JITTER_REL: f64 = 1e-11;

/// Posterior variances below this fraction of the signal variance are
/// indistinguishable from jitter residue and clamp to exactly zero, which
/// keeps re-sampling at visited points deterministic.
pub const VARIANCE_FLOOR_REL: f64 = 1e-9;

/// Posterior mean and variance at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorQuery {
    pub mean: f64,
    pub variance: f64,
}

/// A zero-mean GP conditioned on scalar targets at augmented-state inputs.
///
/// The Gram matrix carries `noise_variance` on the diagonal for every point
/// appended through [`GpState::condition_append`]; points appended through
/// [`GpState::condition_append_with_noise`] may carry a different value,
/// which is how noisy pre-run measurements and noiseless function samples
/// coexist in one conditioning set.
///
/// Values are immutable from the caller's view: conditioning consumes the
/// state and returns the extended one. With a degenerate kernel
/// (`signal_variance == 0`) the posterior is identically zero and
/// conditioning only records the data.
#[derive(Debug)]
pub struct GpState {
    kernel: KernelSpec,
    noise_variance: f64,
    input_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    point_noise: Vec<f64>,
    chol: CholeskyFactor,
    /// `L^{-1} y`, extended by one entry per appended point.
    solved_targets: Vec<f64>,
    /// Single-entry memo of the last forward solve, keyed by the projected
    /// query. During rollouts the posterior query at the current state and
    /// the conditioning step at the matching augmented state share one
    /// solve through this.
    memo: std::sync::Mutex<Option<SolveMemo>>,
}

#[derive(Debug, Clone)]
struct SolveMemo {
    projected_key: Vec<f64>,
    solve: QuerySolve,
    posterior: PosteriorQuery,
}

impl Clone for GpState {
    fn clone(&self) -> Self {
        GpState {
            kernel: self.kernel,
            noise_variance: self.noise_variance,
            input_dim: self.input_dim,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            point_noise: self.point_noise.clone(),
            chol: self.chol.clone(),
            solved_targets: self.solved_targets.clone(),
            memo: std::sync::Mutex::new(None),
        }
    }
}

/// Forward-solved kernel vector at one query point, reusable as the
/// Cholesky row when conditioning at that same point.
#[derive(Debug, Clone)]
pub(crate) struct QuerySolve {
    pub row: Vec<f64>,
    pub self_covariance: f64,
}

impl GpState {
    pub fn new(kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        if !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(CoreError::invalid(format!(
                "noise variance must be finite and >= 0, got {noise_variance}"
            )));
        }
        Ok(GpState {
            kernel,
            noise_variance,
            input_dim: 0,
            inputs: Vec::new(),
            targets: Vec::new(),
            point_noise: Vec::new(),
            chol: CholeskyFactor::new(),
            solved_targets: Vec::new(),
            memo: std::sync::Mutex::new(None),
        })
    }

    /// Batch construction; equivalent to repeated [`GpState::condition_append`].
    pub fn from_data(
        kernel: KernelSpec,
        noise_variance: f64,
        inputs: &[DVector<f64>],
        targets: &[f64],
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(CoreError::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let mut gp = GpState::new(kernel, noise_variance)?;
        for (x, &y) in inputs.iter().zip(targets) {
            gp = gp.condition_append(x.as_slice(), y)?;
        }
        Ok(gp)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn stored_inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks(self.input_dim.max(1))
    }

    pub fn stored_targets(&self) -> &[f64] {
        &self.targets
    }

    fn jitter(&self) -> f64 {
        GRAM_JITTER_REL * self.kernel.signal_variance()
    }

    /// The vector of kernel evaluations between every stored input and `query`.
    pub fn kernel_vector(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.kernel.check_query(query)?;
        Ok(self
            .stored_inputs()
            .map(|x| self.kernel.eval_unchecked(x, query))
            .collect())
    }

    pub(crate) fn posterior_solved(&self, query: &[f64]) -> Result<(PosteriorQuery, QuerySolve)> {
        if self.kernel.signal_variance() == 0.0 {
            self.kernel.check_query(query)?;
            return Ok((
                PosteriorQuery {
                    mean: 0.0,
                    variance: 0.0,
                },
                QuerySolve {
                    row: Vec::new(),
                    self_covariance: 0.0,
                },
            ));
        }
        let key = self.kernel.projected(query);
        if let Some(memo) = self.memo.lock().unwrap().as_ref() {
            if memo.solve.row.len() == self.len() && memo.projected_key == key {
                return Ok((memo.posterior, memo.solve.clone()));
            }
        }
        let mut row = self.kernel_vector(query)?;
        let self_covariance = self.kernel.eval_unchecked(query, query);
        self.chol.forward_solve_in_place(&mut row);
        let mean = dot(&row, &self.solved_targets);
        let mut variance = (self_covariance - dot(&row, &row)).max(0.0);
        if variance < VARIANCE_FLOOR_REL * self.kernel.signal_variance() {
            variance = 0.0;
        }
        let posterior = PosteriorQuery { mean, variance };
        let solve = QuerySolve {
            row,
            self_covariance,
        };
        *self.memo.lock().unwrap() = Some(SolveMemo {
            projected_key: key.to_vec(),
            solve: solve.clone(),
            posterior,
        });
        Ok((posterior, solve))
    }

    /// Posterior mean and variance at `query`, via two triangular solves
    /// against the cached factor. The variance is clamped at zero.
    pub fn posterior(&self, query: &[f64]) -> Result<PosteriorQuery> {
        self.posterior_solved(query).map(|(p, _)| p)
    }

    pub(crate) fn push_point(
        &mut self,
        input: &[f64],
        target: f64,
        point_noise: f64,
        solve: QuerySolve,
    ) -> Result<()> {
        if !target.is_finite() {
            return Err(CoreError::invalid("non-finite conditioning target"));
        }
        if self.is_empty() {
            self.input_dim = input.len();
        } else if input.len() != self.input_dim {
            return Err(CoreError::invalid(format!(
                "conditioning input of length {} on a GP with input dimension {}",
                input.len(),
                self.input_dim
            )));
        }
        if self.kernel.signal_variance() > 0.0 {
            let raw_diag = solve.self_covariance + self.jitter() + point_noise;
            self.chol.append_solved_row(&solve.row, raw_diag)?;
            let pivot = (raw_diag - dot(&solve.row, &solve.row)).sqrt();
            let solved = (target - dot(&solve.row, &self.solved_targets)) / pivot;
            self.solved_targets.push(solved);
        }
        self.inputs.extend_from_slice(input);
        self.targets.push(target);
        self.point_noise.push(point_noise);
        Ok(())
    }

    pub(crate) fn append_in_place(
        &mut self,
        input: &[f64],
        target: f64,
        point_noise: f64,
    ) -> Result<()> {
        self.kernel.check_query(input)?;
        let (_, solve) = self.posterior_solved(input)?;
        self.push_point(input, target, point_noise, solve)
    }

    /// Conditions on one further (input, target) pair by extending the
    /// Cholesky factor with a rank-1 row in O(n^2).
    pub fn condition_append(self, input: &[f64], target: f64) -> Result<Self> {
        let noise = self.noise_variance;
        self.condition_append_with_noise(input, target, noise)
    }

    /// As [`GpState::condition_append`] but with an explicit noise term for
    /// this point's Gram diagonal entry.
    pub fn condition_append_with_noise(
        mut self,
        input: &[f64],
        target: f64,
        point_noise: f64,
    ) -> Result<Self> {
        self.append_in_place(input, target, point_noise)?;
        Ok(self)
    }

    /// `-1/2 y^T (K + Sigma)^{-1} y - 1/2 log det(K + Sigma) - n/2 log(2 pi)`
    /// for this conditioning set.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(CoreError::invalid(
                "log marginal likelihood of an empty conditioning set",
            ));
        }
        if self.kernel.signal_variance() == 0.0 {
            return Err(CoreError::invalid(
                "log marginal likelihood of a degenerate kernel",
            ));
        }
        let n = self.len() as f64;
        let data_fit = -0.5 * dot(&self.solved_targets, &self.solved_targets);
        let complexity = -self.chol.sum_log_diag();
        Ok(data_fit + complexity - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
    }

    /// Relative reconstruction error of `L L^T` against the jittered Gram
    /// matrix; diagnostic for the factorization invariant.
    pub fn factorization_error(&self) -> f64 {
        if self.kernel.signal_variance() == 0.0 || self.is_empty() {
            return 0.0;
        }
        let n = self.len();
        let inputs: Vec<&[f64]> = self.stored_inputs().collect();
        let mut gram = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] = self.kernel.eval_unchecked(inputs[i], inputs[j]);
            }
            gram[(i, i)] += self.jitter() + self.point_noise[i];
        }
        let back = self.chol.reconstruct();
        (&back - &gram).norm() / gram.norm()
    }

    /// Snapshot of the conditioning data for run records.
    pub fn record(&self) -> GpStateRecord {
        GpStateRecord {
            kernel: self.kernel,
            noise_variance: self.noise_variance,
            inputs: self.stored_inputs().map(|x| x.to_vec()).collect(),
            targets: self.targets.clone(),
        }
    }
}

/// Serializable snapshot of a conditioned GP.
#[derive(Debug, Clone, Serialize)]
pub struct GpStateRecord {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}
