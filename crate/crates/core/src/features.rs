//! State feature maps `φ(s)` for linear-in-parameters policies.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shape of the feature expansion. Every kind appends a trailing bias of 1.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    /// `[x_1, .., x_n, 1]`
    IdentityBias,
    /// `[x_1, x_1^2, .., x_1^p, .., x_n^p, 1]`
    PolynomialBias { degree: u32 },
    /// Gaussian bumps on a regular grid over `[-1, 1]^n`, then the bias.
    RbfGrid { per_dim: usize, bandwidth: f64 },
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::IdentityBias => write!(f, "identity"),
            FeatureKind::PolynomialBias { degree } => write!(f, "poly:{degree}"),
            FeatureKind::RbfGrid { per_dim, bandwidth } => write!(f, "rbf:{per_dim}:{bandwidth}"),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    /// Parses `identity`, `poly:DEGREE` or `rbf:PER_DIM:BANDWIDTH`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!("unrecognised feature map `{s}` (expected identity, poly:DEGREE or rbf:N:BANDWIDTH)"))
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["identity"] => Ok(FeatureKind::IdentityBias),
            ["poly", d] => {
                let degree: u32 = d.parse().map_err(|_| bad())?;
                if degree == 0 || degree > 8 {
                    return Err(Error::Config(format!(
                        "polynomial degree must lie in 1..=8, got {degree}"
                    )));
                }
                Ok(FeatureKind::PolynomialBias { degree })
            }
            ["rbf", n, bw] => {
                let per_dim: usize = n.parse().map_err(|_| bad())?;
                let bandwidth: f64 = bw.parse().map_err(|_| bad())?;
                if per_dim == 0 || per_dim > 16 {
                    return Err(Error::Config(format!(
                        "rbf points per dimension must lie in 1..=16, got {per_dim}"
                    )));
                }
                if !(bandwidth.is_finite() && bandwidth > 0.0) {
                    return Err(Error::Config(format!(
                        "rbf bandwidth must be positive, got {bandwidth}"
                    )));
                }
                Ok(FeatureKind::RbfGrid { per_dim, bandwidth })
            }
            _ => Err(bad()),
        }
    }
}

/// A feature map over observations of a fixed dimension.
///
/// Each observation component is multiplied by its `input_scale` entry
/// before expansion, so `input_scale.len()` is the expected input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kind: FeatureKind,
    input_scale: Vec<f64>,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind, input_scale: Vec<f64>) -> Result<Self> {
        if input_scale.is_empty() {
            return Err(Error::Config(
                "feature map needs at least one input dimension".into(),
            ));
        }
        if input_scale.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("feature input scales must be finite".into()));
        }
        if let FeatureKind::RbfGrid { per_dim, .. } = kind {
            let cells = (per_dim as f64).powi(input_scale.len() as i32);
            if cells > 4096.0 {
                return Err(Error::Config(format!(
                    "rbf grid of {cells} cells is too large"
                )));
            }
        }
        Ok(Self { kind, input_scale })
    }

    pub fn identity(input_dim: usize) -> Self {
        Self {
            kind: FeatureKind::IdentityBias,
            input_scale: vec![1.0; input_dim.max(1)],
        }
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn input_dim(&self) -> usize {
        self.input_scale.len()
    }

    pub fn output_dim(&self) -> usize {
        let n = self.input_dim();
        1 + match self.kind {
            FeatureKind::IdentityBias => n,
            FeatureKind::PolynomialBias { degree } => n * degree as usize,
            FeatureKind::RbfGrid { per_dim, .. } => per_dim.pow(n as u32),
        }
    }

    /// Same expansion with a different kind, keeping the input scaling.
    pub fn with_kind(&self, kind: FeatureKind) -> Result<Self> {
        Self::new(kind, self.input_scale.clone())
    }

    pub fn features(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.output_dim());
        self.features_into(observation, &mut out)?;
        Ok(out)
    }

    /// Writes `φ(observation)` into `out`, replacing its contents.
    pub fn features_into(&self, observation: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if observation.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: observation.len(),
            });
        }
        out.clear();
        let scaled = observation
            .iter()
            .zip(&self.input_scale)
            .map(|(x, s)| x * s);
        match self.kind {
            FeatureKind::IdentityBias => out.extend(scaled),
            FeatureKind::PolynomialBias { degree } => {
                for x in scaled {
                    let mut p = 1.0;
                    for _ in 0..degree {
                        p *= x;
                        out.push(p);
                    }
                }
            }
            FeatureKind::RbfGrid { per_dim, bandwidth } => {
                let x: Vec<f64> = scaled.collect();
                let n = x.len();
                let center = |i: usize| {
                    if per_dim == 1 {
                        0.0
                    } else {
                        -1.0 + 2.0 * i as f64 / (per_dim - 1) as f64
                    }
                };
                let denom = 2.0 * bandwidth * bandwidth;
                let cells = per_dim.pow(n as u32);
                for cell in 0..cells {
                    // last dimension varies fastest
                    let mut rem = cell;
                    let mut sq = 0.0;
                    for d in (0..n).rev() {
                        let c = center(rem % per_dim);
                        rem /= per_dim;
                        sq += (x[d] - c) * (x[d] - c);
                    }
                    out.push((-sq / denom).exp());
                }
            }
        }
        out.push(1.0);
        Ok(())
    }
}
