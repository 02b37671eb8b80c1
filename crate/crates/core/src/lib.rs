//! Heavy-tailed stochastic policy gradient.
//!
//! Linear-feature location-family policies (Gaussian, Cauchy, Laplace,
//! Student-t), an unbiased randomized-horizon gradient estimator, plain,
//! momentum and two-trajectory gradient-tracking updates, three sparse
//! reward control tasks, and a seeded experiment harness writing reward
//! curves as CSV.

pub mod config;
pub mod envs;
pub mod error;
pub mod estimator;
pub mod features;
pub mod harness;

pub mod optimizers;
pub mod policy;
pub mod rng;
pub mod vector;

pub use envs::{BuiltinEnv, EnvKind, EnvSpec, EnvState, Environment, StepOutcome};
pub use error::{Error, Result};
pub use estimator::{pg_estimate, rollout, sample_horizon, Trajectory, TrajectoryStep};
pub use features::{FeatureKind, FeatureMap};
pub use optimizers::{GradientSampler, OptimizerKind, OptimizerState, ProbeMethod, VarianceReport};
pub use policy::{ActionInterval, ActionSample, Family, PolicyParams};
pub use rng::{Role, StreamRng, StreamSplitter};
pub use vector::GradientVector;
