//! Kernel hyperparameter selection by log marginal likelihood.

use nalgebra::DVector;

use super::kernel::KernelSpec;
use super::state::GpState;
use crate::error::{CoreError, Result};

/// Bounds on the log-transformed hyperparameters during training.
const LOG_LOWER: f64 = -13.815_510_557_964_274; // ln(1e-6)
const LOG_UPPER: f64 = 13.815_510_557_964_274; // ln(1e6)

/// Lower bound the trained signal variance can be driven to when the data
/// carries no signal.
pub const SIGNAL_VARIANCE_FLOOR: f64 = 1e-6;

/// Training result: the selected hyperparameters plus diagnostics. The
/// returned likelihood never falls below that of the initial guess.
#[derive(Debug, Clone)]
pub struct TrainedKernel {
    pub kernel: KernelSpec,
    pub log_marginal_likelihood: f64,
    pub converged: bool,
}

/// `-1/2 y^T (K + s I)^{-1} y - 1/2 log det(K + s I) - n/2 log(2 pi)`.
pub fn log_marginal_likelihood(
    kernel: &KernelSpec,
    inputs: &[DVector<f64>],
    targets: &[f64],
    noise_variance: f64,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(CoreError::invalid(
            "log marginal likelihood needs at least one data point",
        ));
    }
    GpState::from_data(*kernel, noise_variance, inputs, targets)?.log_marginal_likelihood()
}

/// Maximizes the log marginal likelihood over `(signal_variance, lengthscale)`
/// in log space, by derivative-free simplex ascent from five deterministic
/// starting points around `init`.
pub fn train_hyperparameters(
    inputs: &[DVector<f64>],
    targets: &[f64],
    noise_variance: f64,
    init: KernelSpec,
) -> Result<TrainedKernel> {
    if inputs.len() < 2 {
        return Err(CoreError::invalid(
            "hyperparameter training needs at least two data points",
        ));
    }
    if inputs.len() != targets.len() {
        return Err(CoreError::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let init_point = [
        init.signal_variance().max(SIGNAL_VARIANCE_FLOOR).ln(),
        init.lengthscale().ln(),
    ];
    let objective = |p: &[f64; 2]| -> f64 {
        let clamped = clamp_point(p);
        let spec = match init.with_hyperparameters(clamped[0].exp(), clamped[1].exp()) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        match log_marginal_likelihood(&spec, inputs, targets, noise_variance) {
            Ok(lml) => -lml,
            Err(_) => f64::INFINITY,
        }
    };

    let offsets: [[f64; 2]; 5] = [
        [0.0, 0.0],
        [1.5, 1.5],
        [-1.5, -1.5],
        [1.5, -1.5],
        [-1.5, 1.5],
    ];
    let mut best: Option<([f64; 2], f64, bool)> = None;
    for off in offsets {
        let start = clamp_point(&[init_point[0] + off[0], init_point[1] + off[1]]);
        let (point, value, converged) = nelder_mead(&objective, start, 200);
        let better = match &best {
            None => true,
            Some((_, v, _)) => value < *v,
        };
        if better {
            best = Some((point, value, converged));
        }
    }
    let (point, value, converged) = best.expect("at least one start");

    // Keep the initial guess when no start improved on it.
    let init_value = objective(&init_point);
    let (point, value) = if init_value <= value {
        (init_point, init_value)
    } else {
        (point, value)
    };
    let clamped = clamp_point(&point);
    let kernel = init.with_hyperparameters(clamped[0].exp(), clamped[1].exp())?;
    if !value.is_finite() {
        return Err(CoreError::numeric(
            "log marginal likelihood not finite at any candidate",
        ));
    }
    Ok(TrainedKernel {
        kernel,
        log_marginal_likelihood: -value,
        converged,
    })
}

fn clamp_point(p: &[f64; 2]) -> [f64; 2] {
    [
        p[0].clamp(LOG_LOWER, LOG_UPPER),
        p[1].clamp(LOG_LOWER, LOG_UPPER),
    ]
}

/// Two-dimensional Nelder-Mead with standard coefficients. Returns the best
/// vertex, its value, and whether the simplex collapsed before the
/// iteration cap.
fn nelder_mead(
    f: &dyn Fn(&[f64; 2]) -> f64,
    start: [f64; 2],
    max_iterations: usize,
) -> ([f64; 2], f64, bool) {
    const STEP: f64 = 0.5;
    let mut simplex: Vec<([f64; 2], f64)> = vec![
        (start, f(&start)),
        ([start[0] + STEP, start[1]], f(&[start[0] + STEP, start[1]])),
        ([start[0], start[1] + STEP], f(&[start[0], start[1] + STEP])),
    ];
    let mut converged = false;
    for _ in 0..max_iterations {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread_f = (simplex[2].1 - simplex[0].1).abs();
        let spread_x = (0..2)
            .map(|i| (simplex[2].0[i] - simplex[0].0[i]).abs())
            .fold(0.0f64, f64::max);
        if spread_f < 1e-10 && spread_x < 1e-8 {
            converged = true;
            break;
        }
        let centroid = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let worst = simplex[2];
        let reflect = |t: f64| -> [f64; 2] {
            [
                centroid[0] + t * (centroid[0] - worst.0[0]),
                centroid[1] + t * (centroid[1] - worst.0[1]),
            ]
        };

        let xr = reflect(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = reflect(2.0);
            let fe = f(&xe);
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (xr, fr);
            continue;
        }
        let xc = reflect(-0.5);
        let fc = f(&xc);
        if fc < worst.1 {
            simplex[2] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        for k in 1..3 {
            let p = [
                0.5 * (simplex[0].0[0] + simplex[k].0[0]),
                0.5 * (simplex[0].0[1] + simplex[k].0[1]),
            ];
            simplex[k] = (p, f(&p));
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (simplex[0].0, simplex[0].1, converged)
}
