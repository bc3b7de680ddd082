//! The measurement dataset a learning-based control law conditions on.

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::gp::{GpState, KernelSpec, PosteriorQuery};

/// Measurements collected during one closed-loop run, cached as a
/// conditioned GP per state dimension (with the process-noise variance on
/// the Gram diagonal, since measured increments carry that noise).
///
/// Values are thread-confined during a rollout; cloning freezes a snapshot.
#[derive(Debug, Clone)]
pub struct LearnerDataset {
    inputs: Vec<DVector<f64>>,
    gps: Vec<GpState>,
}

impl LearnerDataset {
    /// An empty dataset with one GP per state dimension. `noise_variances`
    /// carries the per-dimension measurement-noise variance added to each
    /// Gram diagonal.
    pub fn new(kernel: KernelSpec, noise_variances: &[f64]) -> Result<Self> {
        if noise_variances.is_empty() {
            return Err(CoreError::invalid("dataset needs at least one dimension"));
        }
        let gps = noise_variances
            .iter()
            .map(|&nv| GpState::new(kernel, nv))
            .collect::<Result<Vec<_>>>()?;
        Ok(LearnerDataset {
            inputs: Vec::new(),
            gps,
        })
    }

    /// Seeds the dataset with pre-run measurements.
    pub fn from_measurements(
        kernel: KernelSpec,
        noise_variances: &[f64],
        inputs: &[DVector<f64>],
        targets: &[Vec<f64>],
    ) -> Result<Self> {
        if targets.len() != noise_variances.len() {
            return Err(CoreError::invalid(format!(
                "{} target dimensions for {} noise entries",
                targets.len(),
                noise_variances.len()
            )));
        }
        let mut data = LearnerDataset::new(kernel, noise_variances)?;
        for (i, x) in inputs.iter().enumerate() {
            let row: Vec<f64> = targets.iter().map(|dim| dim[i]).collect();
            data.append(x.clone(), &row)?;
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.gps.len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self, dim: usize) -> &[f64] {
        self.gps[dim].stored_targets()
    }

    pub fn gp(&self, dim: usize) -> &GpState {
        &self.gps[dim]
    }

    /// Records one measurement: the augmented state visited and the
    /// per-dimension regression targets.
    pub fn append(&mut self, input: DVector<f64>, targets: &[f64]) -> Result<()> {
        if targets.len() != self.gps.len() {
            return Err(CoreError::invalid(format!(
                "{} targets for {} output dimensions",
                targets.len(),
                self.gps.len()
            )));
        }
        for (gp, &y) in self.gps.iter_mut().zip(targets) {
            let noise = gp.noise_variance();
            gp.append_in_place(input.as_slice(), y, noise)?;
        }
        self.inputs.push(input);
        Ok(())
    }

    pub fn posterior(&self, dim: usize, query: &[f64]) -> Result<PosteriorQuery> {
        self.gps[dim].posterior(query)
    }

    pub fn posterior_mean(&self, dim: usize, query: &[f64]) -> Result<f64> {
        Ok(self.posterior(dim, query)?.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cache_matches_from_scratch_conditioning() {
        let kernel = KernelSpec::squared_exponential(1.2, 0.9).unwrap();
        let noise = [0.04];
        let mut data = LearnerDataset::new(kernel, &noise).unwrap();
        let points = [(0.0, 0.5, 0.3), (0.6, -0.2, -0.1), (-0.8, 0.1, 0.4)];
        for (x, u, y) in points {
            data.append(DVector::from_vec(vec![x, u]), &[y]).unwrap();
        }

        let inputs: Vec<DVector<f64>> = points
            .iter()
            .map(|(x, u, _)| DVector::from_vec(vec![*x, *u]))
            .collect();
        let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
        let scratch = GpState::from_data(kernel, noise[0], &inputs, &ys).unwrap();

        for q in [-1.0, 0.0, 0.3, 1.2] {
            let a = data.posterior(0, &[q, 0.0]).unwrap();
            let b = scratch.posterior(&[q, 0.0]).unwrap();
            assert_relative_eq!(a.mean, b.mean, epsilon = 1e-8);
            assert_relative_eq!(a.variance, b.variance, epsilon = 1e-8);
        }
    }

    #[test]
    fn append_rejects_wrong_target_arity() {
        let kernel = KernelSpec::squared_exponential(1.0, 1.0).unwrap();
        let mut data = LearnerDataset::new(kernel, &[0.0, 0.0]).unwrap();
        let err = data.append(DVector::from_vec(vec![0.0, 0.0, 0.0]), &[1.0]);
        assert!(err.is_err());
    }
}
