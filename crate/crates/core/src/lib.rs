//! Design of data-independent parameters for online learning-based control
//! laws under Gaussian-process dynamics uncertainty.
//!
//! The pipeline: model the unknown additive dynamics component with GPs
//! ([`gp`]), sample closed-loop trajectories in which the control law keeps
//! learning from the data it collects ([`world`]), average the
//! finite-horizon cost over a fixed draw set and minimize it over the
//! parameter box ([`saa`]), then validate the chosen parameters by seeded
//! Monte Carlo simulation of the true system ([`eval`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod gp;
pub mod laws;
pub mod rng;
pub mod saa;
pub mod world;

pub use data::PriorData;
pub use error::{CoreError, Result};
pub use gp::{
    log_marginal_likelihood, train_hyperparameters, GpState, GpStateRecord, InputProjection,
    KernelSpec, PosteriorQuery, TrainedKernel,
};
pub use laws::{
    data_independent_counterpart, gp_mean_tracking_control, linear_feedback_control, ControlLaw,
    ControlLawDef, GpMeanTrackingLaw, LearnerDataset, LinearFeedbackLaw, ParamBox,
    ReferenceProfile,
};
pub use saa::{
    antler_optimize, convergence_study, OptResult, OptimizeSettings, SaaProblem, StageCost,
    StartRecord, StudyRow,
};
pub use world::{
    one_step_sample, PriorModel, RolloutDraws, StateEnsemble, SystemSpec, Trajectory,
    TrajectoryDraws, WorldModel,
};
pub use eval::{
    collect_prior_measurements, compare_laws, monte_carlo, simulate_true_system, LawComparison,
    McSummary, PairedDifference, RunRecord, TrueSystemSpec, UnknownDynamics,
};
