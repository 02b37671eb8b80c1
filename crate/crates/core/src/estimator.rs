//! Randomized-horizon policy-gradient estimation.
//!
//! A horizon `T ~ Geom(1 - γ^{1/2})` on `{0, 1, 2, ..}` is drawn, one
//! trajectory of at most `T + 1` steps is rolled out, and the gradient is
//!
//! ```text
//! ∑_{t=0}^{T} γ^{t/2} r_t · ∑_{τ=0}^{t} ∇ log π_θ(a_τ | s_τ)
//! ```
//!
//! Since `P(T ≥ t) = γ^{t/2}`, the estimate is unbiased for the gradient of
//! the infinite-horizon `γ`-discounted return.

use rand_distr::{Distribution, Geometric};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::policy::PolicyParams;
use crate::rng::StreamRng;
use crate::vector::{dot, GradientVector};

pub fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    Ok(())
}

/// Draws `T` with `P(T = t) = (1 - γ^{1/2}) γ^{t/2}`.
pub fn sample_horizon(gamma: f64, rng: &mut StreamRng) -> Result<usize> {
    validate_gamma(gamma)?;
    let geom = Geometric::new(1.0 - gamma.sqrt())
        .map_err(|e| Error::Config(format!("horizon law: {e}")))?;
    Ok(usize::try_from(geom.sample(rng)).unwrap_or(usize::MAX))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observation: Vec<f64>,
    pub raw_action: f64,
    pub clipped_action: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub horizon: usize,
    /// Step index at which the environment turned terminal, if before `horizon`
    /// or exactly at it.
    pub truncated_at: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

fn check_feature_dim(params: &PolicyParams, features: &FeatureMap) -> Result<()> {
    if features.output_dim() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            actual: features.output_dim(),
        });
    }
    Ok(())
}

/// Resets `env` and runs the policy for up to `horizon + 1` steps, stopping
/// at the first terminal transition.
pub fn rollout<E: Environment + ?Sized>(
    env: &E,
    params: &PolicyParams,
    features: &FeatureMap,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    check_feature_dim(params, features)?;
    let interval = env.spec().action_interval;
    let mut state = env.reset(rng);
    let mut steps = Vec::with_capacity(horizon.saturating_add(1).min(4096));
    let mut phi = Vec::with_capacity(params.dim());
    let mut truncated_at = None;
    for t in 0..=horizon {
        features.features_into(&state.observation, &mut phi)?;
        let action = params.sample_action(&phi, interval, rng)?;
        let outcome = env.step(&state, action.clipped)?;
        steps.push(TrajectoryStep {
            observation: std::mem::take(&mut state.observation),
            raw_action: action.raw,
            clipped_action: action.clipped,
            reward: outcome.reward,
        });
        state = outcome.next_state;
        if outcome.terminal {
            truncated_at = Some(t);
            break;
        }
    }
    Ok(Trajectory {
        steps,
        horizon,
        truncated_at,
    })
}

/// The randomized-horizon gradient estimate for one trajectory.
///
/// The inner score sum is carried forward, so the cost is `O(T·d)`. Scores
/// are evaluated at the raw (unclipped) actions.
pub fn pg_estimate(
    traj: &Trajectory,
    params: &PolicyParams,
    features: &FeatureMap,
    gamma: f64,
) -> Result<GradientVector> {
    validate_gamma(gamma)?;
    check_feature_dim(params, features)?;
    let d = params.dim();
    let root = gamma.sqrt();
    let mut grad = GradientVector::zeros(d);
    let mut score_sum = vec![0.0; d];
    let mut phi = Vec::with_capacity(d);
    let mut weight = 1.0;
    for (t, step) in traj.steps.iter().enumerate() {
        features.features_into(&step.observation, &mut phi)?;
        let loc = dot(params.theta(), &phi);
        let c = params
            .score_factor(loc, step.raw_action)
            .map_err(|_| Error::NonFinite { step: t })?;
        for (acc, f) in score_sum.iter_mut().zip(&phi) {
            *acc += c * f;
        }
        let w = weight * step.reward;
        if w != 0.0 {
            grad.add_scaled(w, &score_sum);
        }
        if !grad.is_finite() || !score_sum.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
        weight *= root;
    }
    Ok(grad)
}
