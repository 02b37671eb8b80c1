use htspg::{
    pg_estimate, rollout, EnvKind, Environment, Family, PolicyParams, Role, StreamSplitter,
};
use proptest::prelude::*;

fn mario_rollout(
    seed: u64,
    horizon: usize,
    family: Family,
) -> (htspg::Trajectory, PolicyParams, htspg::FeatureMap) {
    let env = EnvKind::Mario1d.build();
    let features = env.spec().default_feature_map.clone();
    let params = PolicyParams::new(vec![-0.05, -0.02], 0.05, family).unwrap();
    let mut rng = StreamSplitter::new(seed).stream(Role::RolloutCurrent, 0, 0);
    (
        rollout(&env, &params, &features, horizon, &mut rng).unwrap(),
        params,
        features,
    )
}

#[test]
fn rollout_respects_horizon_and_termination() {
    for seed in 0..50 {
        let (traj, _, _) = mario_rollout(seed, 30, Family::Cauchy);
        assert!(traj.len() <= 31);
        match traj.truncated_at {
            Some(t) => assert_eq!(t + 1, traj.len()),
            None => assert_eq!(traj.len(), 31),
        }
        assert!(traj
            .steps
            .iter()
            .all(|s| (-0.1..=0.1).contains(&s.clipped_action)));
    }
}

#[test]
fn zero_reward_trajectory_gives_zero_gradient() {
    let (mut traj, params, features) = mario_rollout(1, 5, Family::Gaussian);
    for s in &mut traj.steps {
        s.reward = 0.0;
    }
    let g = pg_estimate(&traj, &params, &features, 0.81).unwrap();
    assert!(g.iter().all(|&x| x == 0.0));
}

#[test]
fn invalid_gamma_is_rejected() {
    let (traj, params, features) = mario_rollout(1, 5, Family::Cauchy);
    for gamma in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(pg_estimate(&traj, &params, &features, gamma).is_err());
    }
}

proptest! {
    #[test]
    fn reward_scaling_scales_estimate(seed in 0u64..1000, k in -6i32..6, negative: bool) {
        let c = if negative { -(2f64.powi(k)) } else { 2f64.powi(k) };
        let (traj, params, features) = mario_rollout(seed, 40, Family::Cauchy);
        let mut scaled = traj.clone();
        for s in &mut scaled.steps {
            s.reward *= c;
        }
        let g = pg_estimate(&traj, &params, &features, 0.81).unwrap();
        let gc = pg_estimate(&scaled, &params, &features, 0.81).unwrap();
        for (a, b) in g.iter().zip(gc.iter()) {
            prop_assert_eq!(a * c, *b);
        }
    }
}
