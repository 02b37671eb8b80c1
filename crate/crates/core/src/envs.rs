//! Sparse-reward control tasks behind one episodic interface.
//!
//! Environments are stateless: the episode state lives in [`EnvState`] and
//! `step` maps a state and an already-clipped action to the next state. A
//! terminal state is absorbing.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMap};
use crate::policy::ActionInterval;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub terminal: bool,
}

impl EnvState {
    fn live(observation: Vec<f64>) -> Self {
        Self {
            observation,
            terminal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub terminal: bool,
}

impl StepOutcome {
    fn new(observation: Vec<f64>, reward: f64, terminal: bool) -> Self {
        Self {
            next_state: EnvState {
                observation,
                terminal,
            },
            reward,
            terminal,
        }
    }

    fn absorbed(state: &EnvState) -> Self {
        Self::new(state.observation.clone(), 0.0, true)
    }
}

/// Static description of an environment and its per-task defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub observation_dim: usize,
    /// Closed `[lo, hi]` bound per observation component.
    pub observation_bounds: Vec<(f64, f64)>,
    pub action_interval: ActionInterval,
    pub default_feature_map: FeatureMap,
    pub default_sigma: f64,
    pub max_episode_steps: usize,
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    fn reset(&self, rng: &mut StreamRng) -> EnvState;

    /// Advances one step. `action` must already lie in the action interval.
    fn step(&self, state: &EnvState, action: f64) -> Result<StepOutcome>;
}

fn check_action(spec: &EnvSpec, action: f64) -> Result<()> {
    let interval = spec.action_interval;
    if !interval.contains(action) {
        return Err(Error::ActionOutOfRange {
            action,
            lo: interval.lo(),
            hi: interval.hi(),
        });
    }
    Ok(())
}

/// One-dimensional coin collection: the coin sits at 0, the agent starts
/// at 0.9 and moves at most 0.1 per step.
#[derive(Debug, Clone)]
pub struct Mario1d {
    spec: EnvSpec,
}

impl Mario1d {
    pub const START: f64 = 0.9;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "mario1d",
                observation_dim: 1,
                observation_bounds: vec![(0.0, 1.0)],
                action_interval: ActionInterval::new(-0.1, 0.1).expect("static interval"),
                default_feature_map: FeatureMap::identity(1),
                default_sigma: 0.05,
                max_episode_steps: 100,
            },
        }
    }
}

impl Default for Mario1d {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Mario1d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _rng: &mut StreamRng) -> EnvState {
        EnvState::live(vec![Self::START])
    }

    fn step(&self, state: &EnvState, action: f64) -> Result<StepOutcome> {
        check_action(&self.spec, action)?;
        if state.terminal {
            return Ok(StepOutcome::absorbed(state));
        }
        let s = state.observation[0];
        let moved = s + action;
        let collected = moved < 0.0;
        let next = moved.clamp(0.0, 1.0);
        Ok(StepOutcome::new(
            vec![next],
            if collected { 1.0 } else { 0.0 },
            collected,
        ))
    }
}

/// Pathological mountain car: a small prize of 10 near the start on the
/// right and a 500 bonanza far away on the left, with an energy penalty of
/// `a²` per step. The action is the velocity.
#[derive(Debug, Clone)]
pub struct PathologicalMountainCar {
    spec: EnvSpec,
}

impl PathologicalMountainCar {
    pub const LEFT: f64 = -4.0;
    pub const RIGHT: f64 = 3.709;
    pub const HIGH_GOAL: f64 = -4.0;
    pub const HIGH_REWARD: f64 = 500.0;
    pub const LOW_GOAL: f64 = 2.667;
    pub const LOW_REWARD: f64 = 10.0;
    /// Half-width of each goal band.
    pub const BAND: f64 = 0.05;
    pub const DT: f64 = 0.1;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pmc",
                observation_dim: 1,
                observation_bounds: vec![(Self::LEFT, Self::RIGHT)],
                action_interval: ActionInterval::new(-1.0, 1.0).expect("static interval"),
                default_feature_map: FeatureMap::new(
                    FeatureKind::PolynomialBias { degree: 2 },
                    vec![0.25],
                )
                .expect("static feature map"),
                default_sigma: 0.5,
                max_episode_steps: 200,
            },
        }
    }

    pub fn in_high_band(s: f64) -> bool {
        (s - Self::HIGH_GOAL).abs() <= Self::BAND
    }

    pub fn in_low_band(s: f64) -> bool {
        (s - Self::LOW_GOAL).abs() <= Self::BAND
    }
}

impl Default for PathologicalMountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PathologicalMountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut StreamRng) -> EnvState {
        EnvState::live(vec![rng.random_range(0.0..=1.0)])
    }

    fn step(&self, state: &EnvState, action: f64) -> Result<StepOutcome> {
        check_action(&self.spec, action)?;
        if state.terminal {
            return Ok(StepOutcome::absorbed(state));
        }
        let s = state.observation[0];
        let next = (s + action * Self::DT).clamp(Self::LEFT, Self::RIGHT);
        let mut reward = -action * action;
        let mut terminal = false;
        if Self::in_high_band(next) {
            reward += Self::HIGH_REWARD;
            terminal = true;
        } else if Self::in_low_band(next) {
            reward += Self::LOW_REWARD;
            terminal = true;
        }
        Ok(StepOutcome::new(vec![next], reward, terminal))
    }
}

/// Torque-driven pendulum with the classic swing-up dynamics. Reward is 1
/// while the pole is within 2 degrees of upright and 0 otherwise.
#[derive(Debug, Clone)]
pub struct SparsePendulum {
    spec: EnvSpec,
}

impl SparsePendulum {
    pub const G: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const UPRIGHT_BAND_DEG: f64 = 2.0;

    pub fn new() -> Self {
        let features = FeatureMap::new(
            FeatureKind::RbfGrid {
                per_dim: 3,
                bandwidth: 0.5,
            },
            vec![1.0, 1.0, 1.0 / Self::MAX_SPEED],
        )
        .expect("static feature map");
        Self {
            spec: EnvSpec {
                name: "sparse_pendulum",
                observation_dim: 3,
                observation_bounds: vec![
                    (-1.0, 1.0),
                    (-1.0, 1.0),
                    (-Self::MAX_SPEED, Self::MAX_SPEED),
                ],
                action_interval: ActionInterval::new(-Self::MAX_TORQUE, Self::MAX_TORQUE)
                    .expect("static interval"),
                default_feature_map: features,
                default_sigma: 1.0,
                max_episode_steps: 200,
            },
        }
    }

    /// Observation for angle `theta` (0 is upright) and angular velocity.
    pub fn observe(theta: f64, theta_dot: f64) -> EnvState {
        EnvState::live(vec![theta.cos(), theta.sin(), theta_dot])
    }

    /// Angle in `(-π, π]` recovered from an observation.
    pub fn angle(observation: &[f64]) -> f64 {
        observation[1].atan2(observation[0])
    }
}

impl Default for SparsePendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for SparsePendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut StreamRng) -> EnvState {
        let theta = rng.random_range(-PI..=PI);
        let theta_dot = rng.random_range(-1.0..=1.0);
        Self::observe(theta, theta_dot)
    }

    fn step(&self, state: &EnvState, torque: f64) -> Result<StepOutcome> {
        check_action(&self.spec, torque)?;
        if state.terminal {
            return Ok(StepOutcome::absorbed(state));
        }
        let theta = Self::angle(&state.observation);
        let theta_dot = state.observation[2];
        let reward = if theta.abs().to_degrees() <= Self::UPRIGHT_BAND_DEG {
            1.0
        } else {
            0.0
        };

        let (g, m, l, dt) = (Self::G, Self::MASS, Self::LENGTH, Self::DT);
        let accel = 3.0 * g / (2.0 * l) * theta.sin() + 3.0 / (m * l * l) * torque;
        let new_theta_dot = theta_dot + accel * dt;
        let new_theta = theta + new_theta_dot * dt;
        let new_theta_dot = new_theta_dot.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);

        let next = Self::observe(new_theta, new_theta_dot);
        Ok(StepOutcome::new(next.observation, reward, false))
    }
}

/// Environment names accepted in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Mario1d,
    Pmc,
    SparsePendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Mario1d, EnvKind::Pmc, EnvKind::SparsePendulum];

    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Mario1d => "mario1d",
            EnvKind::Pmc => "pmc",
            EnvKind::SparsePendulum => "sparse_pendulum",
        }
    }

    pub fn build(&self) -> BuiltinEnv {
        match self {
            EnvKind::Mario1d => BuiltinEnv::Mario1d(Mario1d::new()),
            EnvKind::Pmc => BuiltinEnv::Pmc(PathologicalMountainCar::new()),
            EnvKind::SparsePendulum => BuiltinEnv::SparsePendulum(SparsePendulum::new()),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown env `{s}` (expected mario1d, pmc or sparse_pendulum)"
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub enum BuiltinEnv {
    Mario1d(Mario1d),
    Pmc(PathologicalMountainCar),
    SparsePendulum(SparsePendulum),
}

impl Environment for BuiltinEnv {
    fn spec(&self) -> &EnvSpec {
        match self {
            BuiltinEnv::Mario1d(e) => e.spec(),
            BuiltinEnv::Pmc(e) => e.spec(),
            BuiltinEnv::SparsePendulum(e) => e.spec(),
        }
    }

    fn reset(&self, rng: &mut StreamRng) -> EnvState {
        match self {
            BuiltinEnv::Mario1d(e) => e.reset(rng),
            BuiltinEnv::Pmc(e) => e.reset(rng),
            BuiltinEnv::SparsePendulum(e) => e.reset(rng),
        }
    }

    fn step(&self, state: &EnvState, action: f64) -> Result<StepOutcome> {
        match self {
            BuiltinEnv::Mario1d(e) => e.step(state, action),
            BuiltinEnv::Pmc(e) => e.step(state, action),
            BuiltinEnv::SparsePendulum(e) => e.step(state, action),
        }
    }
}
