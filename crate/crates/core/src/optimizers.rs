//! Parameter updates: plain stochastic gradient ascent, momentum, and the
//! two-trajectory heavy-tailed gradient tracking step.

use std::fmt;
use std::str::FromStr;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::estimator::{pg_estimate, rollout, sample_horizon};
use crate::features::FeatureMap;
use crate::policy::PolicyParams;
use crate::rng::{Role, StreamSplitter};
use crate::vector::GradientVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Htspg,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Htspg => "htspg",
        }
    }

    /// Trajectories consumed per batch element per iteration.
    pub fn trajectories_per_sample(&self) -> usize {
        match self {
            OptimizerKind::Htspg => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" => Ok(OptimizerKind::Momentum),
            "htspg" => Ok(OptimizerKind::Htspg),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd, momentum or htspg)"
            ))),
        }
    }
}

/// Iterate of one optimisation run.
///
/// `g` is the update direction. It starts at zero and `prev_theta` starts
/// equal to `theta`, so the first tracking correction vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    theta: Vec<f64>,
    prev_theta: Vec<f64>,
    g: GradientVector,
    k: usize,
    eta: f64,
    beta: f64,
    max_grad_norm: Option<f64>,
    clip_events: usize,
}

impl OptimizerState {
    pub fn new(theta0: Vec<f64>, eta: f64, beta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {eta}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0,1], got {beta}")));
        }
        if theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain(
                "initial theta has non-finite components".into(),
            ));
        }
        let d = theta0.len();
        Ok(Self {
            prev_theta: theta0.clone(),
            theta: theta0,
            g: GradientVector::zeros(d),
            k: 0,
            eta,
            beta,
            max_grad_norm: None,
            clip_events: 0,
        })
    }

    /// Rescale the direction to this norm whenever it is exceeded.
    pub fn with_max_grad_norm(mut self, max_grad_norm: Option<f64>) -> Result<Self> {
        if let Some(m) = max_grad_norm {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Config(format!(
                    "max_grad_norm must be positive, got {m}"
                )));
            }
        }
        self.max_grad_norm = max_grad_norm;
        Ok(self)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn prev_theta(&self) -> &[f64] {
        &self.prev_theta
    }

    pub fn direction(&self) -> &GradientVector {
        &self.g
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn clip_events(&self) -> usize {
        self.clip_events
    }

    fn check(&self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                actual: grad.len(),
            });
        }
        if !grad.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical {
                what: "gradient".into(),
                iteration: self.k,
            });
        }
        Ok(())
    }

    /// Installs `g` as the new direction and takes the ascent step.
    fn apply(&mut self, mut g: GradientVector) -> Result<bool> {
        if !g.is_finite() {
            return Err(Error::Numerical {
                what: "update direction".into(),
                iteration: self.k,
            });
        }
        let mut clipped = false;
        if let Some(max) = self.max_grad_norm {
            let norm = g.norm();
            if norm > max {
                log::debug!(
                    "iteration {}: clipping direction norm {norm:.3e} to {max}",
                    self.k
                );
                g.scale(max / norm);
                self.clip_events += 1;
                clipped = true;
            }
        }
        let next: Vec<f64> = self
            .theta
            .iter()
            .zip(g.iter())
            .map(|(t, d)| t + self.eta * d)
            .collect();
        self.prev_theta = std::mem::replace(&mut self.theta, next);
        self.g = g;
        self.k += 1;
        Ok(clipped)
    }

    /// `θ ← θ + η·grad`
    pub fn sgd_step(&mut self, grad: &[f64]) -> Result<bool> {
        self.check(grad)?;
        self.apply(grad.to_vec().into())
    }

    /// `g ← (1-β)g + β·grad`, then `θ ← θ + η·g`.
    pub fn momentum_step(&mut self, grad: &[f64]) -> Result<bool> {
        self.check(grad)?;
        let b = self.beta;
        let g: Vec<f64> = self
            .g
            .iter()
            .zip(grad)
            .map(|(g, x)| (1.0 - b) * g + b * x)
            .collect();
        self.apply(g.into())
    }

    /// Gradient tracking with a second estimate taken at the previous iterate:
    ///
    /// `g ← (1-β)g + β·G_cur + (1-β)(G_cur - G_prev)`, then `θ ← θ + η·g`.
    pub fn tracking_step(&mut self, grad_current: &[f64], grad_previous: &[f64]) -> Result<bool> {
        self.check(grad_current)?;
        self.check(grad_previous)?;
        let g = tracking_direction(&self.g, grad_current, grad_previous, self.beta);
        self.apply(g)
    }
}

/// The tracked direction `(1 - β) g + β G_cur + (1 - β)(G_cur - G_prev)`.
pub fn tracking_direction(g: &[f64], cur: &[f64], prev: &[f64], beta: f64) -> GradientVector {
    let keep = 1.0 - beta;
    g.iter()
        .zip(cur)
        .zip(prev)
        .map(|((g, c), p)| keep * g + beta * c + keep * (c - p))
        .collect::<Vec<_>>()
        .into()
}

/// Draws horizons and batch-averaged gradient estimates from addressable
/// random streams.
///
/// Iteration `k` takes its horizon from `(Horizon, k, 0)` and batch element
/// `b` of the rollouts at the current iterate from `(RolloutCurrent, k, b)`.
/// Rollouts at the previous iterate use `(RolloutPrevious, k, b)`, or the
/// current streams when `paired` is set.
pub struct GradientSampler<'a, E: ?Sized> {
    pub env: &'a E,
    pub features: &'a FeatureMap,
    pub gamma: f64,
    pub batch_size: usize,
    pub streams: StreamSplitter,
    pub paired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEstimate {
    pub grad: GradientVector,
    /// Mean undiscounted return of the batch trajectories.
    pub mean_return: f64,
}

impl<E: Environment + ?Sized> GradientSampler<'_, E> {
    pub fn horizon(&self, k: usize) -> Result<usize> {
        sample_horizon(
            self.gamma,
            &mut self.streams.stream(Role::Horizon, k as u64, 0),
        )
    }

    pub fn batch(
        &self,
        params: &PolicyParams,
        k: usize,
        horizon: usize,
        role: Role,
    ) -> Result<BatchEstimate> {
        let role = if self.paired && role == Role::RolloutPrevious {
            Role::RolloutCurrent
        } else {
            role
        };
        let n = self.batch_size.max(1);
        let mut grad = GradientVector::zeros(params.dim());
        let mut total = 0.0;
        for b in 0..n {
            let mut rng = self.streams.stream(role, k as u64, b as u64);
            let traj = rollout(self.env, params, self.features, horizon, &mut rng)?;
            total += traj.total_reward();
            let est = pg_estimate(&traj, params, self.features, self.gamma)?;
            grad.add_scaled(1.0, &est);
        }
        grad.scale(1.0 / n as f64);
        if !grad.is_finite() {
            return Err(Error::Numerical {
                what: "batch gradient".into(),
                iteration: k,
            });
        }
        Ok(BatchEstimate {
            grad,
            mean_return: total / n as f64,
        })
    }
}

/// What happened in one optimisation iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub horizon: usize,
    pub direction_norm: f64,
    pub return_current: f64,
    /// Return of the rollouts at the previous iterate (tracking only).
    pub return_previous: Option<f64>,
    pub clipped: bool,
}

/// One full iteration of `kind` at the state's current iterate. The policy
/// family and scale come from `template`; its `theta` is ignored.
pub fn iterate<E: Environment + ?Sized>(
    kind: OptimizerKind,
    state: &mut OptimizerState,
    sampler: &GradientSampler<'_, E>,
    template: &PolicyParams,
) -> Result<IterationRecord> {
    match kind {
        OptimizerKind::Htspg => htspg_step(state, sampler, template),
        OptimizerKind::Sgd | OptimizerKind::Momentum => {
            let k = state.k;
            let horizon = sampler.horizon(k)?;
            let params = template.with_theta(state.theta.clone())?;
            let est = sampler.batch(&params, k, horizon, Role::RolloutCurrent)?;
            let clipped = if kind == OptimizerKind::Sgd {
                state.sgd_step(&est.grad)?
            } else {
                state.momentum_step(&est.grad)?
            };
            Ok(IterationRecord {
                iteration: k,
                horizon,
                direction_norm: state.g.norm(),
                return_current: est.mean_return,
                return_previous: None,
                clipped,
            })
        }
    }
}

/// One iteration of heavy-tailed stochastic policy gradient: a single
/// horizon shared by a batch at `θ_k` and a batch at `θ_{k-1}`, followed by
/// the tracking update.
pub fn htspg_step<E: Environment + ?Sized>(
    state: &mut OptimizerState,
    sampler: &GradientSampler<'_, E>,
    template: &PolicyParams,
) -> Result<IterationRecord> {
    let k = state.k;
    let horizon = sampler.horizon(k)?;
    let current = template.with_theta(state.theta.clone())?;
    let previous = template.with_theta(state.prev_theta.clone())?;
    let cur = sampler.batch(&current, k, horizon, Role::RolloutCurrent)?;
    let prev = sampler.batch(&previous, k, horizon, Role::RolloutPrevious)?;
    let clipped = state.tracking_step(&cur.grad, &prev.grad)?;
    Ok(IterationRecord {
        iteration: k,
        horizon,
        direction_norm: state.g.norm(),
        return_current: cur.mean_return,
        return_previous: Some(prev.mean_return),
        clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeMethod {
    Raw,
    Tracking { beta: f64 },
}

/// Empirical spread of the raw estimator and of the tracked direction at a
/// frozen parameter vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VarianceReport {
    pub samples: usize,
    pub raw_variance: Vec<f64>,
    pub tracked_variance: Vec<f64>,
    pub raw_trace: f64,
    pub tracked_trace: f64,
}

pub const PROBE_WARMUP: usize = 50;

/// Runs the direction recursion with `θ` held fixed (no parameter updates)
/// for `n_iters` iterations and reports sample variances over the
/// iterations after the first [`PROBE_WARMUP`].
pub fn variance_probe<E: Environment + ?Sized>(
    sampler: &GradientSampler<'_, E>,
    params: &PolicyParams,
    method: ProbeMethod,
    n_iters: usize,
) -> Result<VarianceReport> {
    if n_iters <= PROBE_WARMUP + 1 {
        return Err(Error::Config(format!(
            "variance probe needs more than {} iterations",
            PROBE_WARMUP + 1
        )));
    }
    let d = params.dim();
    let mut g = GradientVector::zeros(d);
    let mut raw = Vec::with_capacity(n_iters - PROBE_WARMUP);
    let mut tracked = Vec::with_capacity(n_iters - PROBE_WARMUP);
    for k in 0..n_iters {
        let horizon = sampler.horizon(k)?;
        let cur = sampler
            .batch(params, k, horizon, Role::RolloutCurrent)?
            .grad;
        g = match method {
            ProbeMethod::Raw => cur.clone(),
            ProbeMethod::Tracking { beta } => {
                let prev = sampler
                    .batch(params, k, horizon, Role::RolloutPrevious)?
                    .grad;
                tracking_direction(&g, &cur, &prev, beta)
            }
        };
        if k >= PROBE_WARMUP {
            raw.push(cur);
            tracked.push(g.clone());
        }
    }
    let raw_variance = sample_variance(&raw, d);
    let tracked_variance = sample_variance(&tracked, d);
    Ok(VarianceReport {
        samples: raw.len(),
        raw_trace: raw_variance.iter().sum(),
        tracked_trace: tracked_variance.iter().sum(),
        raw_variance,
        tracked_variance,
    })
}

fn sample_variance(xs: &[GradientVector], d: usize) -> Vec<f64> {
    let n = xs.len() as f64;
    (0..d)
        .map(|i| {
            let mean = xs.iter().map(|x| x[i]).sum::<f64>() / n;
            xs.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}
