//! Command-line front end: train, re-evaluate, probe estimator variance and
//! print default configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use htspg::config::{parse_config_with_overrides, ExperimentConfig};
use htspg::harness::{
    evaluate_manifest, probe_variance, read_manifest, run_experiment, threads_from_env,
};
use htspg::{EnvKind, Error, OptimizerKind};

#[derive(Parser)]
#[command(
    name = "htspg",
    version,
    about = "Heavy-tailed stochastic policy gradient experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write CSV curves plus a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `key=value`, applied on top of the config file. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Re-evaluate the final policies recorded in a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Episodes per seed (defaults to the run's eval_episodes).
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Compare raw and tracked gradient variance with θ frozen at zero.
    ProbeVariance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the default config for an environment.
    PrintDefaultConfig {
        env: EnvKind,
        #[arg(long, default_value = "htspg")]
        optimizer: OptimizerKind,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Dimension { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_config_with_overrides(&text, overrides)
        .map_err(|e| Failure::Config(format!("{}:\n{e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let summary = run_experiment(&cfg, threads_from_env())?;
            for r in &summary.runs {
                let last = r.curve.last().map_or(f64::NAN, |p| p.mean_return);
                println!(
                    "seed {}: final mean return {last:.4}, {} clip events",
                    r.seed, r.clip_events
                );
            }
            println!("manifest: {}", summary.manifest_path.display());
            if summary.failed {
                let msg = summary
                    .runs
                    .iter()
                    .filter_map(|r| {
                        r.failure.as_ref().map(|f| {
                            format!(
                                "seed {} at iteration {}: {}",
                                r.seed, f.iteration, f.message
                            )
                        })
                    })
                    .collect::<Vec<_>>()
                    .join("\n");
                return Err(Failure::Numerical(msg));
            }
        }
        Command::Eval { manifest, episodes } => {
            let m = read_manifest(&manifest)?;
            for (seed, e) in evaluate_manifest(&m, episodes)? {
                println!(
                    "seed {seed}: mean return {:.4} (std {:.4}, {} episodes)",
                    e.mean,
                    e.std(),
                    e.returns.len()
                );
            }
        }
        Command::ProbeVariance { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let reports: Vec<serde_json::Value> = probe_variance(&cfg)?
                .into_iter()
                .map(|(seed, r)| serde_json::json!({ "seed": seed, "report": r }))
                .collect();
            let text = serde_json::to_string_pretty(&reports)
                .map_err(|e| Failure::Numerical(e.to_string()))?;
            println!("{text}");
        }
        Command::PrintDefaultConfig { env, optimizer } => {
            print!(
                "{}",
                ExperimentConfig::defaults(env, optimizer).to_toml_string()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
            }
            log::debug!("exiting with status {}", f.code());
            ExitCode::from(f.code())
        }
    }
}
