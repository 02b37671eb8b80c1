use htspg::{ActionInterval, Family, PolicyParams, Role, StreamSplitter};

fn tail_fraction(family: Family) -> f64 {
    let p = PolicyParams::new(vec![0.0], 1.0, family).unwrap();
    let wide = ActionInterval::new(-1e9, 1e9).unwrap();
    let mut rng = StreamSplitter::new(42).stream(Role::Probe, 0, 0);
    let n = 1_000_000;
    let hits = (0..n)
        .filter(|_| p.sample_action(&[1.0], wide, &mut rng).unwrap().raw.abs() > 5.0)
        .count();
    hits as f64 / n as f64
}

#[test]
fn cauchy_tails_dominate_gaussian() {
    let cauchy = tail_fraction(Family::Cauchy);
    let gauss = tail_fraction(Family::Gaussian);
    // P(|X| > 5) is about 0.126 for Cauchy and 5.7e-7 for Gaussian
    assert!((cauchy - 0.1257).abs() < 0.003, "{cauchy}");
    assert!(cauchy > gauss);
}

#[test]
fn sampling_is_reproducible() {
    for family in [
        Family::Gaussian,
        Family::Cauchy,
        Family::Laplace,
        Family::StudentT { nu: 2.0 },
    ] {
        let p = PolicyParams::new(vec![0.2, -0.1], 0.3, family).unwrap();
        let interval = ActionInterval::new(-1.0, 1.0).unwrap();
        let draw = || {
            let mut rng = StreamSplitter::new(7).stream(Role::RolloutCurrent, 3, 1);
            (0..100)
                .map(|_| p.sample_action(&[0.5, 1.0], interval, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }
}

#[test]
fn clipped_action_stays_in_interval_and_raw_is_kept() {
    let p = PolicyParams::new(vec![0.0], 1.0, Family::Cauchy).unwrap();
    let interval = ActionInterval::new(-0.1, 0.1).unwrap();
    let mut rng = StreamSplitter::new(8).stream(Role::Probe, 0, 0);
    let mut saw_outside = false;
    for _ in 0..10_000 {
        let a = p.sample_action(&[1.0], interval, &mut rng).unwrap();
        assert!(interval.contains(a.clipped));
        assert_eq!(a.clipped, a.raw.clamp(-0.1, 0.1));
        saw_outside |= !interval.contains(a.raw);
    }
    assert!(saw_outside);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(PolicyParams::new(vec![0.0], 0.0, Family::Gaussian).is_err());
    assert!(PolicyParams::new(vec![0.0], -1.0, Family::Gaussian).is_err());
    assert!(PolicyParams::new(vec![f64::NAN], 1.0, Family::Gaussian).is_err());
    assert!(PolicyParams::new(vec![0.0], 1.0, Family::StudentT { nu: 0.0 }).is_err());
    let p = PolicyParams::new(vec![0.0, 1.0], 1.0, Family::Cauchy).unwrap();
    assert!(p.mean(&[1.0]).is_err());
}
