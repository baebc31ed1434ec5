//! Online gradient descent for time-varying quasar-convex losses.
//!
//! The crate is layered bottom-up:
//!
//! * [`numeric`]: vectors, ball projection and seeded sampling
//! * [`theory`]: step-size ranges, contraction factors and regret bounds
//! * [`glm`]: single-neuron losses, their oracles and certified constants
//! * [`env`]: the drifting target and per-step sample batches
//! * [`runner`]: the online loop and its trajectory record
//! * [`verify`]: numerical checks of every inequality the bounds rely on
//! * [`experiment`]: configuration, presets and output artifacts used by the CLI

pub mod env;
pub mod error;
pub mod experiment;
pub mod glm;
pub mod numeric;
pub mod report;
pub mod runner;
pub mod theory;
pub mod verify;

pub use env::{estimate_delta, generate_env, sample_batch, DriftConfig, EnvTrace};
pub use error::{Error, Result};
pub use glm::{
    activation_eval, clarke_subgrad, derive_constants, empirical_gradient, empirical_loss,
    population_gradient_mc, relu_basin_contains, subgrad_bound_check, Activation, GlmProblem,
    InputModel, RegionHint, SampleBatch,
};
pub use numeric::{dot, gaussian_vector, norm, project_ball, BallRegion, SeededRng, Vector};
pub use report::{CheckReport, Violation};
pub use runner::{
    ogd_step, projected_ogd_step, run_online, run_online_with, RunOptions, RunRecord,
    StepSizePolicy,
};
pub use theory::{
    bound_quasar_bounded_grad, bound_quasar_weak_smooth, bound_strong_quasar, gamma_contraction,
    optimal_c_scalar, relu_max_drift, relu_min_norm, step_size_max_strong, step_size_sufficient,
    BoundKind, BoundReport, QuasarConstants, SufficientRule,
};
