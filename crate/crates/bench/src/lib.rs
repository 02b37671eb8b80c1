//! Fixtures shared by the criterion benchmarks.

use htspg::{
    rollout, EnvKind, Environment, Family, FeatureMap, PolicyParams, Role, StreamSplitter,
    Trajectory,
};

/// An environment with its default features and a zero-initialised policy.
pub struct Fixture {
    pub env: htspg::BuiltinEnv,
    pub features: FeatureMap,
    pub params: PolicyParams,
    pub gamma: f64,
}

impl Fixture {
    pub fn new(kind: EnvKind, family: Family, gamma: f64) -> Self {
        let env = kind.build();
        let features = env.spec().default_feature_map.clone();
        let params = PolicyParams::zeros(features.output_dim(), env.spec().default_sigma, family)
            .expect("default sigma is valid");
        Self {
            env,
            features,
            params,
            gamma,
        }
    }

    /// A rollout of exactly `horizon + 1` steps unless the task terminates first.
    pub fn trajectory(&self, horizon: usize, seed: u64) -> Trajectory {
        let mut rng = StreamSplitter::new(seed).stream(Role::Probe, 0, 0);
        rollout(&self.env, &self.params, &self.features, horizon, &mut rng)
            .expect("fixture rollout")
    }
}
