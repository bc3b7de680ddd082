//! Exact Gaussian-process regression: kernels, incremental conditioning,
//! posterior queries, and hyperparameter training.

mod chol;
mod kernel;
mod state;
mod train;

pub use kernel::{InputProjection, KernelSpec};
pub use state::{GpState, GpStateRecord, PosteriorQuery, GRAM_JITTER_REL, VARIANCE_FLOOR_REL};
pub use train::{
    log_marginal_likelihood, train_hyperparameters, TrainedKernel, SIGNAL_VARIANCE_FLOOR,
};
