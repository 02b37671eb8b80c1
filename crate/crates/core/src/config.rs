//! Experiment configuration.
//!
//! Configs are flat TOML key/value files:
//!
//! ```toml
//! env = "mario1d"            # mario1d | pmc | sparse_pendulum   (required)
//! optimizer = "htspg"        # sgd | momentum | htspg            (required)
//! family = "cauchy"          # gaussian | cauchy | laplace | student_t
//! sigma = 0.05               # policy scale; defaults per env
//! nu = 2.0                   # student_t degrees of freedom
//! features = "identity"      # identity | poly:DEGREE | rbf:N:BANDWIDTH; defaults per env
//! eta = 0.01
//! beta = 0.2
//! max_grad_norm = 1000.0     # or "none"
//! paired_rng = true
//! gamma = 0.81
//! batch_size = 10
//! iterations = 500
//! eval_every = 10
//! eval_episodes = 20
//! seeds = [1, 2, 3]
//! output = "runs/mario1d"
//! probe_iters = 500
//! ```
//!
//! Every key except `env` and `optimizer` has a default. Parsing reports all
//! problems at once, each with the line it came from when there is one.

use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::envs::{EnvKind, Environment};
use crate::error::Error;
use crate::features::{FeatureKind, FeatureMap};
use crate::optimizers::OptimizerKind;
use crate::policy::Family;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub family: Family,
    pub sigma: f64,
    /// Overrides the environment's default feature expansion.
    pub features: Option<FeatureKind>,
    pub optimizer: OptimizerKind,
    pub eta: f64,
    pub beta: f64,
    pub max_grad_norm: Option<f64>,
    pub paired_rng: bool,
    pub gamma: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub probe_iters: usize,
}

const KEYS: [&str; 18] = [
    "env",
    "optimizer",
    "family",
    "sigma",
    "nu",
    "features",
    "eta",
    "beta",
    "max_grad_norm",
    "paired_rng",
    "gamma",
    "batch_size",
    "iterations",
    "eval_every",
    "eval_episodes",
    "seeds",
    "output",
    "probe_iters",
];

impl ExperimentConfig {
    /// Defaults for `env` with the given optimizer.
    pub fn defaults(env: EnvKind, optimizer: OptimizerKind) -> Self {
        let built = env.build();
        let (gamma, iterations) = match env {
            EnvKind::Mario1d => (0.81, 500),
            EnvKind::Pmc => (0.99, 1000),
            EnvKind::SparsePendulum => (0.99, 500),
        };
        Self {
            env,
            family: Family::Cauchy,
            sigma: built.spec().default_sigma,
            features: None,
            optimizer,
            eta: 0.01,
            beta: 0.2,
            max_grad_norm: Some(1000.0),
            paired_rng: true,
            gamma,
            batch_size: 10,
            iterations,
            eval_every: 10,
            eval_episodes: 20,
            seeds: (1..=10).collect(),
            output: PathBuf::from(format!("runs/{}", env.name())),
            probe_iters: 500,
        }
    }

    /// The feature map used for this run.
    pub fn feature_map(&self) -> Result<FeatureMap, Error> {
        let default = self.env.build().spec().default_feature_map.clone();
        match &self.features {
            Some(kind) => default.with_kind(kind.clone()),
            None => Ok(default),
        }
    }

    /// Cumulative training trajectories after `iteration` iterations, for one seed.
    pub fn samples_after(&self, iteration: usize) -> u64 {
        (self.batch_size * self.optimizer.trajectories_per_sample()) as u64 * iteration as u64
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new();
        let mut put = |k: &str, v: Value| {
            t.insert(k.to_string(), v);
        };
        put("env", self.env.name().into());
        put("optimizer", self.optimizer.name().into());
        put("family", self.family.name().into());
        put("sigma", self.sigma.into());
        if let Family::StudentT { nu } = self.family {
            put("nu", nu.into());
        }
        if let Some(kind) = &self.features {
            put("features", kind.to_string().into());
        }
        put("eta", self.eta.into());
        put("beta", self.beta.into());
        put(
            "max_grad_norm",
            match self.max_grad_norm {
                Some(m) => m.into(),
                None => "none".into(),
            },
        );
        put("paired_rng", self.paired_rng.into());
        put("gamma", self.gamma.into());
        put("batch_size", (self.batch_size as i64).into());
        put("iterations", (self.iterations as i64).into());
        put("eval_every", (self.eval_every as i64).into());
        put("eval_episodes", (self.eval_episodes as i64).into());
        put(
            "seeds",
            Value::Array(
                self.seeds
                    .iter()
                    .map(|&s| match i64::try_from(s) {
                        Ok(v) => Value::Integer(v),
                        Err(_) => Value::String(s.to_string()),
                    })
                    .collect(),
            ),
        );
        put("output", self.output.display().to_string().into());
        put("probe_iters", (self.probe_iters as i64).into());
        t
    }

    /// Canonical TOML text, in schema key order.
    pub fn to_toml_string(&self) -> String {
        let table = self.to_table();
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = table.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }

    /// Git-style object hash of the canonical config text:
    /// `sha256("blob <len>\0" + text)`, hex encoded.
    pub fn content_hash(&self) -> String {
        let text = self.to_toml_string();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", text.len()).as_bytes());
        h.update(text.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One problem found while parsing a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based line in the config text, when the problem has one.
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn messages(&self) -> Vec<String> {
        self.0.iter().map(|i| i.message.clone()).collect()
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_with_overrides(text, &[])
}

/// Parses `text`, then applies `key=value` overrides on top before validating.
/// Override values are read as TOML values, falling back to a bare string.
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[String],
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigErrors(vec![ConfigIssue {
            line,
            field: "<syntax>".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut issues = Vec::new();
    let mut overridden = Vec::new();
    for ov in overrides {
        match parse_override(ov) {
            Ok((k, v)) => {
                overridden.push(k.clone());
                table.insert(k, v);
            }
            Err(message) => issues.push(ConfigIssue {
                line: None,
                field: ov.clone(),
                message,
            }),
        }
    }
    let line_of = |key: &str| {
        if overridden.iter().any(|k| k == key) {
            return None;
        }
        text.lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map(|i| i + 1)
    };
    let mut v = Validator {
        table: &table,
        issues,
        line_of: &line_of,
    };
    let cfg = v.build();
    if v.issues.is_empty() {
        Ok(cfg.expect("no issues implies a config"))
    } else {
        Err(ConfigErrors(v.issues))
    }
}

fn parse_override(ov: &str) -> Result<(String, Value), String> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| "override must look like key=value".to_string())?;
    let key = key.trim();
    if key.is_empty() {
        return Err("override has an empty key".into());
    }
    let raw = raw.trim();
    let snippet = format!("v = {raw}");
    let value = match snippet.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

struct Validator<'a> {
    table: &'a Table,
    issues: Vec<ConfigIssue>,
    line_of: &'a dyn Fn(&str) -> Option<usize>,
}

impl Validator<'_> {
    fn issue(&mut self, field: &str, message: impl Into<String>) {
        let line = (self.line_of)(field);
        self.issues.push(ConfigIssue {
            line,
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.table.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.issue(
                    key,
                    format!("expected a string, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.table.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.issue(
                    key,
                    format!("expected a number, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn count(&mut self, key: &str, min: usize) -> Option<usize> {
        match self.table.get(key)? {
            Value::Integer(i) if *i >= min as i64 => Some(*i as usize),
            Value::Integer(i) => {
                self.issue(key, format!("{key} must be at least {min}, got {i}"));
                None
            }
            other => {
                self.issue(
                    key,
                    format!("expected an integer, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn parsed<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Result<T, Error>) -> Option<T> {
        let s = self.string(key)?;
        match parse(&s) {
            Ok(v) => Some(v),
            Err(Error::Config(msg)) => {
                self.issue(key, msg);
                None
            }
            Err(e) => {
                self.issue(key, e.to_string());
                None
            }
        }
    }

    fn build(&mut self) -> Option<ExperimentConfig> {
        for key in self.table.keys() {
            if !KEYS.contains(&key.as_str()) {
                let key = key.clone();
                self.issue(&key, format!("unknown key `{key}`"));
            }
        }
        for key in ["env", "optimizer"] {
            if !self.table.contains_key(key) {
                self.issue(key, format!("missing required field `{key}`"));
            }
        }
        let env = self.parsed("env", |s| s.parse::<EnvKind>());
        let optimizer = self.parsed("optimizer", |s| s.parse::<OptimizerKind>());
        let mut cfg = ExperimentConfig::defaults(
            env.unwrap_or(EnvKind::Mario1d),
            optimizer.unwrap_or(OptimizerKind::Htspg),
        );

        if let Some(family) = self.parsed("family", |s| s.parse::<Family>()) {
            cfg.family = family;
        }
        if let Some(nu) = self.float("nu") {
            match cfg.family {
                Family::StudentT { .. } if nu.is_finite() && nu > 0.0 => {
                    cfg.family = Family::StudentT { nu }
                }
                Family::StudentT { .. } => {
                    self.issue("nu", format!("nu must be positive, got {nu}"))
                }
                _ => self.issue("nu", "nu only applies to family = \"student_t\""),
            }
        }
        if let Some(sigma) = self.float("sigma") {
            if sigma.is_finite() && sigma > 0.0 {
                cfg.sigma = sigma;
            } else {
                self.issue("sigma", format!("sigma must be positive, got {sigma}"));
            }
        }
        if let Some(kind) = self.parsed("features", |s| s.parse::<FeatureKind>()) {
            cfg.features = Some(kind);
            if let Err(e) = cfg.feature_map() {
                self.issue("features", e.to_string());
            }
        }
        if let Some(eta) = self.float("eta") {
            if eta.is_finite() && eta > 0.0 {
                cfg.eta = eta;
            } else {
                self.issue("eta", format!("eta must be positive, got {eta}"));
            }
        }
        if let Some(beta) = self.float("beta") {
            if beta > 0.0 && beta <= 1.0 {
                cfg.beta = beta;
            } else {
                self.issue("beta", format!("beta must lie in (0,1], got {beta}"));
            }
        }
        match self.table.get("max_grad_norm") {
            None => {}
            Some(Value::String(s)) if s == "none" => cfg.max_grad_norm = None,
            Some(_) => match self.float("max_grad_norm") {
                Some(m) if m.is_finite() && m > 0.0 => cfg.max_grad_norm = Some(m),
                Some(m) => self.issue(
                    "max_grad_norm",
                    format!("max_grad_norm must be positive or \"none\", got {m}"),
                ),
                None => {}
            },
        }
        match self.table.get("paired_rng") {
            None => {}
            Some(Value::Boolean(b)) => cfg.paired_rng = *b,
            Some(other) => {
                let t = other.type_str();
                self.issue("paired_rng", format!("expected a boolean, found {t}"))
            }
        }
        if let Some(gamma) = self.float("gamma") {
            if gamma > 0.0 && gamma < 1.0 {
                cfg.gamma = gamma;
            } else {
                self.issue("gamma", format!("gamma must lie in (0,1), got {gamma}"));
            }
        }
        if let Some(b) = self.count("batch_size", 1) {
            cfg.batch_size = b;
        }
        if let Some(k) = self.count("iterations", 0) {
            cfg.iterations = k;
        }
        if let Some(e) = self.count("eval_every", 1) {
            cfg.eval_every = e;
        }
        if let Some(m) = self.count("eval_episodes", 1) {
            cfg.eval_episodes = m;
        }
        if let Some(n) = self.count("probe_iters", crate::optimizers::PROBE_WARMUP + 2) {
            cfg.probe_iters = n;
        }
        if let Some(out) = self.string("output") {
            if out.trim().is_empty() {
                self.issue("output", "output path must not be empty");
            } else {
                cfg.output = PathBuf::from(out);
            }
        }
        if let Some(seeds) = self.seeds() {
            cfg.seeds = seeds;
        }
        if self.issues.is_empty() {
            Some(cfg)
        } else {
            None
        }
    }

    fn seeds(&mut self) -> Option<Vec<u64>> {
        let arr = match self.table.get("seeds")? {
            Value::Array(a) => a.clone(),
            other => {
                let t = other.type_str();
                self.issue("seeds", format!("expected an array of integers, found {t}"));
                return None;
            }
        };
        if arr.is_empty() {
            self.issue("seeds", "seeds must not be empty");
            return None;
        }
        let mut out = Vec::with_capacity(arr.len());
        for v in &arr {
            let seed = match v {
                Value::Integer(i) if *i >= 0 => Some(*i as u64),
                Value::String(s) => s.parse::<u64>().ok(),
                _ => None,
            };
            match seed {
                Some(s) if out.contains(&s) => {
                    self.issue("seeds", format!("duplicate seed {s}"));
                    return None;
                }
                Some(s) => out.push(s),
                None => {
                    self.issue(
                        "seeds",
                        format!("seed {v} is not a non-negative 64-bit integer"),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("env = \"mario1d\"\noptimizer = \"htspg\"\n").unwrap();
        assert_eq!(
            cfg,
            ExperimentConfig::defaults(EnvKind::Mario1d, OptimizerKind::Htspg)
        );
        assert_eq!(cfg.sigma, 0.05);
        assert_eq!(cfg.beta, 0.2);
        assert_eq!(cfg.eta, 0.01);
        assert_eq!(cfg.batch_size, 10);
    }

    #[test]
    fn beta_out_of_range() {
        let err =
            parse_config("env = \"mario1d\"\noptimizer = \"htspg\"\nbeta = 1.5\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, Some(3));
        assert!(err.0[0].message.contains("beta must lie in (0,1]"));
    }

    #[test]
    fn recipe_values_echo_back() {
        let text = "env = \"mario1d\"\noptimizer = \"htspg\"\ngamma = 0.81\nbatch_size = 10\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.gamma, 0.81);
        assert_eq!(cfg.batch_size, 10);
        let again = parse_config(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn reports_every_problem() {
        let text =
            "optimizer = \"adam\"\ncolour = \"red\"\ngamma = 1.0\nbatch_size = 0\nseeds = []\n";
        let err = parse_config(text).unwrap_err();
        let fields: Vec<&str> = err.0.iter().map(|i| i.field.as_str()).collect();
        for f in ["colour", "env", "optimizer", "gamma", "batch_size", "seeds"] {
            assert!(fields.contains(&f), "missing {f} in {err}");
        }
        let colour = err.0.iter().find(|i| i.field == "colour").unwrap();
        assert_eq!(colour.line, Some(2));
        let env = err.0.iter().find(|i| i.field == "env").unwrap();
        assert_eq!(env.line, None);
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config("env = \"mario1d\"\noptimizer = = 3\n").unwrap_err();
        assert_eq!(err.0[0].line, Some(2));
    }

    #[test]
    fn overrides_apply_and_validate() {
        let base = "env = \"mario1d\"\noptimizer = \"htspg\"\n";
        let cfg = parse_config_with_overrides(
            base,
            &[
                "family=gaussian".into(),
                "eta=0.5".into(),
                "seeds=[3,4]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.family, Family::Gaussian);
        assert_eq!(cfg.eta, 0.5);
        assert_eq!(cfg.seeds, vec![3, 4]);
        let err =
            parse_config_with_overrides(base, &["beta=2".into(), "nonsense".into()]).unwrap_err();
        assert_eq!(err.0.len(), 2);
        assert!(err.0.iter().all(|i| i.line.is_none()));
    }

    #[test]
    fn student_t_nu_and_features() {
        let text = "env = \"pmc\"\noptimizer = \"sgd\"\nfamily = \"student_t\"\nnu = 3.5\nfeatures = \"poly:3\"\nmax_grad_norm = \"none\"\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.family, Family::StudentT { nu: 3.5 });
        assert_eq!(cfg.max_grad_norm, None);
        assert_eq!(cfg.feature_map().unwrap().output_dim(), 4);
        assert_eq!(parse_config(&cfg.to_toml_string()).unwrap(), cfg);
        assert!(parse_config("env = \"pmc\"\noptimizer = \"sgd\"\nnu = 3.0\n").is_err());
    }

    #[test]
    fn large_seed_survives() {
        let mut cfg = ExperimentConfig::defaults(EnvKind::Pmc, OptimizerKind::Sgd);
        cfg.seeds = vec![u64::MAX, 0];
        assert_eq!(parse_config(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::defaults(EnvKind::Mario1d, OptimizerKind::Htspg);
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.eta = 0.02;
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }

    fn any_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            prop::sample::select(EnvKind::ALL.to_vec()),
            prop::sample::select(vec![
                OptimizerKind::Sgd,
                OptimizerKind::Momentum,
                OptimizerKind::Htspg,
            ]),
            prop::sample::select(vec![
                Family::Gaussian,
                Family::Cauchy,
                Family::Laplace,
                Family::StudentT { nu: 4.5 },
            ]),
            (1e-6f64..10.0, 1e-6f64..1.0, 0.01f64..1.0, 0.01f64..0.999),
            (
                1usize..64,
                0usize..5000,
                prop::collection::hash_set(any::<u64>(), 1..6),
            ),
            any::<bool>(),
            prop::option::of(1.0f64..1e4),
        )
            .prop_map(
                |(
                    env,
                    opt,
                    family,
                    (sigma, eta, beta, gamma),
                    (batch, iters, seeds),
                    paired,
                    clip,
                )| {
                    let mut c = ExperimentConfig::defaults(env, opt);
                    c.family = family;
                    c.sigma = sigma;
                    c.eta = eta;
                    c.beta = beta;
                    c.gamma = gamma;
                    c.batch_size = batch;
                    c.iterations = iters;
                    c.seeds = seeds.into_iter().collect();
                    c.paired_rng = paired;
                    c.max_grad_norm = clip;
                    c
                },
            )
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(cfg in any_config()) {
            prop_assert_eq!(parse_config(&cfg.to_toml_string()).unwrap(), cfg);
        }
    }
}
