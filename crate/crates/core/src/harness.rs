//! Seeded training runs, policy evaluation, cross-seed aggregation and the
//! CSV / JSON artifacts of a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::optimizers::{
    iterate, variance_probe, GradientSampler, OptimizerKind, OptimizerState, ProbeMethod,
    VarianceReport,
};
use crate::policy::PolicyParams;
use crate::rng::{Role, StreamRng, StreamSplitter};

/// Environment variable capping the number of seeds trained concurrently.
pub const THREADS_ENV: &str = "HTSPG_THREADS";

/// Undiscounted returns of a batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub returns: Vec<f64>,
}

impl Evaluation {
    /// Sample standard deviation of the episode returns (0 for one episode).
    pub fn std(&self) -> f64 {
        sample_std(&self.returns, self.mean)
    }
}

/// Runs `episodes` fresh episodes of the stochastic policy, each to
/// termination or the environment's step cap.
pub fn evaluate_policy<E: Environment + ?Sized>(
    env: &E,
    params: &PolicyParams,
    features: &FeatureMap,
    episodes: usize,
    rng: &mut StreamRng,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::Config(
            "evaluation needs at least one episode".into(),
        ));
    }
    let interval = env.spec().action_interval;
    let max_steps = env.spec().max_episode_steps;
    let mut phi = Vec::with_capacity(params.dim());
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        let mut total = 0.0;
        for _ in 0..max_steps {
            features.features_into(&state.observation, &mut phi)?;
            let action = params.sample_action(&phi, interval, rng)?;
            let out = env.step(&state, action.clipped)?;
            total += out.reward;
            state = out.next_state;
            if out.terminal {
                break;
            }
        }
        returns.push(total);
    }
    Ok(Evaluation {
        mean: mean(&returns),
        returns,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub cumulative_samples: u64,
    pub mean_return: f64,
    pub std_return: f64,
    /// Per-episode returns for a single seed; per-seed means in an aggregate.
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub final_theta: Vec<f64>,
    pub clip_events: usize,
    pub wall_time_secs: f64,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub iteration: usize,
    pub message: String,
}

/// Iterations at which the policy is evaluated: 0, every `eval_every`, and the last.
pub fn eval_grid(iterations: usize, eval_every: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..=iterations).step_by(eval_every.max(1)).collect();
    if grid.last() != Some(&iterations) {
        grid.push(iterations);
    }
    grid
}

/// Trains one seed from `θ = 0` and records its evaluation curve.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let start = Instant::now();
    let env = cfg.env.build();
    let features = cfg.feature_map()?;
    let template = PolicyParams::zeros(features.output_dim(), cfg.sigma, cfg.family)?;
    let mut state = OptimizerState::new(template.theta().to_vec(), cfg.eta, cfg.beta)?
        .with_max_grad_norm(cfg.max_grad_norm)?;
    let streams = StreamSplitter::new(seed);
    let sampler = GradientSampler {
        env: &env,
        features: &features,
        gamma: cfg.gamma,
        batch_size: cfg.batch_size,
        streams,
        paired: cfg.paired_rng,
    };

    let mut curve = Vec::new();
    let mut failure = None;
    let grid = eval_grid(cfg.iterations, cfg.eval_every);
    let mut next_eval = grid.iter().copied().peekable();

    for k in 0..=cfg.iterations {
        if next_eval.peek() == Some(&k) {
            next_eval.next();
            let params = template.with_theta(state.theta().to_vec())?;
            let mut rng = streams.stream(Role::Eval, k as u64, 0);
            let eval = evaluate_policy(&env, &params, &features, cfg.eval_episodes, &mut rng)?;
            if !eval.mean.is_finite() {
                failure = Some(Failure {
                    iteration: k,
                    message: "non-finite evaluation return".into(),
                });
                break;
            }
            curve.push(CurvePoint {
                iteration: k,
                cumulative_samples: cfg.samples_after(k),
                mean_return: eval.mean,
                std_return: eval.std(),
                returns: eval.returns,
            });
        }
        if k == cfg.iterations {
            break;
        }
        if let Err(e) = iterate(cfg.optimizer, &mut state, &sampler, &template) {
            log::error!("seed {seed}: iteration {k} aborted: {e}");
            failure = Some(Failure {
                iteration: k,
                message: e.to_string(),
            });
            break;
        }
    }
    if state.clip_events() > 0 {
        log::info!("seed {seed}: {} direction clip events", state.clip_events());
    }
    Ok(SeedRun {
        seed,
        curve,
        final_theta: state.theta().to_vec(),
        clip_events: state.clip_events(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        failure,
    })
}

/// Pointwise mean and sample standard deviation across seeds. `returns` of
/// each output point holds the per-seed mean returns in input order.
pub fn aggregate_seeds(curves: &[Vec<CurvePoint>]) -> Result<Vec<CurvePoint>> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Config("no curves to aggregate".into()))?;
    for c in curves {
        let same = c.len() == first.len()
            && c.iter().zip(first).all(|(a, b)| {
                a.iteration == b.iteration && a.cumulative_samples == b.cumulative_samples
            });
        if !same {
            return Err(Error::Config(
                "curves do not share an iteration grid".into(),
            ));
        }
    }
    Ok((0..first.len())
        .map(|i| {
            let per_seed: Vec<f64> = curves.iter().map(|c| c[i].mean_return).collect();
            let mean = mean(&per_seed);
            CurvePoint {
                iteration: first[i].iteration,
                cumulative_samples: first[i].cumulative_samples,
                mean_return: mean,
                std_return: sample_std(&per_seed, mean),
                returns: per_seed,
            }
        })
        .collect())
}

/// Arithmetic mean, exact when all values agree.
fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        Some(&x0) if xs.iter().all(|&x| x == x0) => x0,
        _ => xs.iter().sum::<f64>() / xs.len() as f64,
    }
}

fn sample_std(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `%.17g`: 17 significant digits, trailing zeros trimmed, exponent form
/// outside `1e-4 <= |x| < 1e17`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// CSV text for a curve. `labels` name the trailing per-return columns.
pub fn curve_csv(curve: &[CurvePoint], labels: &[String], failure: Option<&Failure>) -> String {
    let mut out = String::from("iteration,cumulative_samples,mean_return,std_return");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for p in curve {
        write!(
            out,
            "{},{},{},{}",
            p.iteration,
            p.cumulative_samples,
            format_float(p.mean_return),
            format_float(p.std_return)
        )
        .expect("write to string");
        for r in &p.returns {
            out.push(',');
            out.push_str(&format_float(*r));
        }
        out.push('\n');
    }
    if let Some(f) = failure {
        let msg = f.message.replace([',', '\n'], ";");
        writeln!(out, "FAILED,{},{}", f.iteration, msg).expect("write to string");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub seed: u64,
    pub wall_time_secs: f64,
    pub clip_events: usize,
    pub final_theta: Vec<f64>,
    pub failure: Option<Failure>,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Canonical config text.
    pub config: String,
    pub config_hash: String,
    pub aggregate_csv: String,
    pub seeds: Vec<SeedManifest>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<CurvePoint>,
    pub manifest_path: PathBuf,
    pub failed: bool,
}

/// Worker slots from `HTSPG_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
}

/// Trains every seed (in parallel on up to `threads` workers), then writes
/// `seed_<s>.csv`, `aggregate.csv` and `manifest.json` under `cfg.output`.
///
/// Output bytes depend only on the config: seeds are merged in config order.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunSummary> {
    cfg.feature_map()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<SeedRun> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| run_seed(cfg, s))
            .collect::<Result<Vec<_>>>()
    })?;

    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let labels: Vec<String> = (0..cfg.eval_episodes)
        .map(|i| format!("return_{i}"))
        .collect();
    let mut seeds = Vec::with_capacity(runs.len());
    for run in &runs {
        let name = format!("seed_{}.csv", run.seed);
        write(
            &out.join(&name),
            &curve_csv(&run.curve, &labels, run.failure.as_ref()),
        )?;
        seeds.push(SeedManifest {
            seed: run.seed,
            wall_time_secs: run.wall_time_secs,
            clip_events: run.clip_events,
            final_theta: run.final_theta.clone(),
            failure: run.failure.clone(),
            csv: name,
        });
    }

    // a failed seed truncates its curve; aggregate over the shared prefix
    let common = runs.iter().map(|r| r.curve.len()).min().unwrap_or(0);
    let prefixes: Vec<Vec<CurvePoint>> = runs.iter().map(|r| r.curve[..common].to_vec()).collect();
    let aggregate = aggregate_seeds(&prefixes)?;
    let first_failure = runs
        .iter()
        .filter_map(|r| r.failure.clone())
        .min_by_key(|f| f.iteration);
    let seed_labels: Vec<String> = cfg.seeds.iter().map(|s| format!("seed_{s}")).collect();
    write(
        &out.join("aggregate.csv"),
        &curve_csv(&aggregate, &seed_labels, first_failure.as_ref()),
    )?;

    let mut notes = Vec::new();
    if cfg.optimizer == OptimizerKind::Sgd {
        notes.push(format!(
            "sgd with the {} family approximates the RPG baseline",
            cfg.family
        ));
    }
    let manifest = Manifest {
        config: cfg.to_toml_string(),
        config_hash: cfg.content_hash(),
        aggregate_csv: "aggregate.csv".into(),
        seeds,
        notes,
    };
    let manifest_path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest: {e}")))?;
    write(&manifest_path, &(json + "\n"))?;

    Ok(RunSummary {
        failed: first_failure.is_some(),
        runs,
        aggregate,
        manifest_path,
    })
}

/// Re-evaluates the final policy of every seed recorded in a manifest.
pub fn evaluate_manifest(
    manifest: &Manifest,
    episodes: Option<usize>,
) -> Result<Vec<(u64, Evaluation)>> {
    let cfg =
        crate::config::parse_config(&manifest.config).map_err(|e| Error::Config(e.to_string()))?;
    let env = cfg.env.build();
    let features = cfg.feature_map()?;
    let episodes = episodes.unwrap_or(cfg.eval_episodes);
    manifest
        .seeds
        .iter()
        .map(|s| {
            let params = PolicyParams::new(s.final_theta.clone(), cfg.sigma, cfg.family)?;
            let mut rng = StreamSplitter::new(s.seed).stream(Role::Eval, u64::MAX, 0);
            Ok((
                s.seed,
                evaluate_policy(&env, &params, &features, episodes, &mut rng)?,
            ))
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Variance probe at `θ = 0` for every configured seed, tracking with the
/// configured `beta`.
pub fn probe_variance(cfg: &ExperimentConfig) -> Result<Vec<(u64, VarianceReport)>> {
    let env = cfg.env.build();
    let features = cfg.feature_map()?;
    let params = PolicyParams::zeros(features.output_dim(), cfg.sigma, cfg.family)?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let sampler = GradientSampler {
                env: &env,
                features: &features,
                gamma: cfg.gamma,
                batch_size: cfg.batch_size,
                streams: StreamSplitter::new(seed),
                paired: cfg.paired_rng,
            };
            let report = variance_probe(
                &sampler,
                &params,
                ProbeMethod::Tracking { beta: cfg.beta },
                cfg.probe_iters,
            )?;
            Ok((seed, report))
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvKind, Mario1d, PathologicalMountainCar};
    use crate::policy::Family;

    fn point(iteration: usize, mean: f64) -> CurvePoint {
        CurvePoint {
            iteration,
            cumulative_samples: iteration as u64 * 10,
            mean_return: mean,
            std_return: 0.0,
            returns: vec![mean],
        }
    }

    #[test]
    fn aggregate_single_seed_has_zero_std() {
        let agg = aggregate_seeds(&[vec![point(0, 0.2), point(10, 0.7)]]).unwrap();
        assert!(agg.iter().all(|p| p.std_return == 0.0));
        assert_eq!(agg[1].mean_return, 0.7);
    }

    #[test]
    fn aggregate_two_point_std() {
        let agg = aggregate_seeds(&[vec![point(0, 0.0)], vec![point(0, 1.0)]]).unwrap();
        assert_eq!(agg[0].mean_return, 0.5);
        assert!((agg[0].std_return - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(agg[0].returns, vec![0.0, 1.0]);
    }

    #[test]
    fn aggregate_constant_seeds() {
        let curves: Vec<_> = (0..10)
            .map(|_| vec![point(0, 0.3), point(5, 0.3)])
            .collect();
        assert!(aggregate_seeds(&curves)
            .unwrap()
            .iter()
            .all(|p| p.std_return == 0.0));
    }

    #[test]
    fn aggregate_rejects_mismatched_grids() {
        assert!(aggregate_seeds(&[vec![point(0, 0.0)], vec![point(5, 0.0)]]).is_err());
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.5), "0.5");
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(-0.25), "-0.25");
        assert_eq!(format_float(0.1), "0.10000000000000001");
        assert_eq!(format_float(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(format_float(500.0), "500");
        assert_eq!(format_float(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_float(1e20), "1e+20");
        assert_eq!(format_float(0.0), "0");
        for x in [0.1, 1.0 / 3.0, 123.456, -7e-9, 6.02e23] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn eval_grid_includes_ends() {
        assert_eq!(eval_grid(0, 10), vec![0]);
        assert_eq!(eval_grid(30, 10), vec![0, 10, 20, 30]);
        assert_eq!(eval_grid(25, 10), vec![0, 10, 20, 25]);
    }

    fn eval(env: &dyn Environment, theta: Vec<f64>, sigma: f64, family: Family) -> Evaluation {
        let params = PolicyParams::new(theta, sigma, family).unwrap();
        let mut rng = StreamSplitter::new(3).stream(Role::Eval, 0, 0);
        evaluate_policy(env, &params, &env.spec().default_feature_map, 20, &mut rng).unwrap()
    }

    #[test]
    fn mario_pinned_policies() {
        let env = Mario1d::new();
        assert_eq!(
            eval(&env, vec![0.0, -0.1], 1e-12, Family::Gaussian).mean,
            1.0
        );
        assert_eq!(
            eval(&env, vec![0.0, 0.1], 1e-12, Family::Gaussian).mean,
            0.0
        );
    }

    #[test]
    fn pmc_idle_policy_earns_nothing() {
        let env = PathologicalMountainCar::new();
        let e = eval(&env, vec![0.0, 0.0, 0.0], 1e-300, Family::Gaussian);
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.returns.len(), 20);
    }

    #[test]
    fn zero_iterations_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::defaults(EnvKind::Mario1d, OptimizerKind::Htspg);
        cfg.iterations = 0;
        cfg.seeds = vec![4];
        cfg.eval_episodes = 3;
        cfg.output = dir.path().to_path_buf();
        let summary = run_experiment(&cfg, Some(1)).unwrap();
        assert!(!summary.failed);
        let csv = fs::read_to_string(dir.path().join("seed_4.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "iteration,cumulative_samples,mean_return,std_return,return_0,return_1,return_2"
        );
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("0,0,"));
        let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert!(agg.starts_with("iteration,cumulative_samples,mean_return,std_return,seed_4\n"));
        let manifest = read_manifest(&summary.manifest_path).unwrap();
        assert_eq!(manifest.config_hash, cfg.content_hash());
        assert_eq!(manifest.seeds[0].final_theta, vec![0.0, 0.0]);
    }

    #[test]
    fn sample_accounting() {
        let mut cfg = ExperimentConfig::defaults(EnvKind::Mario1d, OptimizerKind::Htspg);
        cfg.iterations = 20;
        cfg.eval_every = 5;
        cfg.eval_episodes = 2;
        let run = run_seed(&cfg, 1).unwrap();
        let samples: Vec<u64> = run.curve.iter().map(|p| p.cumulative_samples).collect();
        assert_eq!(samples, vec![0, 100, 200, 300, 400]);
        cfg.optimizer = OptimizerKind::Sgd;
        let run = run_seed(&cfg, 1).unwrap();
        assert_eq!(run.curve.last().unwrap().cumulative_samples, 200);
    }
}
