//! Univariate location-family policies `π_θ(a|s)` with location `θᵀφ(s)` and a
//! fixed scale `σ`.
//!
//! Actions are scalar. A multivariate extension would be a product of
//! independent components of the same family.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::vector::{dot, GradientVector};

/// Raw draws are clamped to this magnitude before anything else sees them.
pub const RAW_ACTION_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    Cauchy,
    Laplace,
    StudentT { nu: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Cauchy => "cauchy",
            Family::Laplace => "laplace",
            Family::StudentT { .. } => "student_t",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::StudentT { nu } if !(nu.is_finite() && nu > 0.0) => Err(Error::Config(
                format!("student_t nu must be positive, got {nu}"),
            )),
            _ => Ok(()),
        }
    }

    /// Log-density of the standardised variable `z`, without the `-ln σ` term.
    fn std_log_density(&self, z: f64) -> f64 {
        match *self {
            Family::Gaussian => -0.5 * (2.0 * PI).ln() - 0.5 * z * z,
            Family::Cauchy => -PI.ln() - z.mul_add(z, 1.0).ln(),
            Family::Laplace => -(2.0f64).ln() - z.abs(),
            Family::StudentT { nu } => {
                ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * PI).ln()
                    - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
            }
        }
    }

    /// `d/dz` of `-ln p(z)`, i.e. the factor that turns into `∂/∂loc ln p`
    /// after dividing by `σ`.
    fn std_score(&self, z: f64) -> f64 {
        match *self {
            Family::Gaussian => z,
            Family::Cauchy => 2.0 * z / z.mul_add(z, 1.0),
            Family::Laplace => {
                if z == 0.0 {
                    0.0
                } else {
                    z.signum()
                }
            }
            Family::StudentT { nu } => (nu + 1.0) * z / (nu + z * z),
        }
    }

    fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Family::Gaussian => StandardNormal.sample(rng),
            Family::Cauchy => Cauchy::new(0.0, 1.0).expect("unit cauchy").sample(rng),
            Family::Laplace => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Family::StudentT { nu } => StudentT::new(nu).expect("validated nu").sample(rng),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    /// Student-t parses with the default `nu = 2`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "cauchy" => Ok(Family::Cauchy),
            "laplace" => Ok(Family::Laplace),
            "student_t" => Ok(Family::StudentT { nu: 2.0 }),
            other => Err(Error::Config(format!(
                "unknown policy family `{other}` (expected gaussian, cauchy, laplace or student_t)"
            ))),
        }
    }
}

/// Closed action interval `[lo, hi]` of an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionInterval {
    lo: f64,
    hi: f64,
}

impl ActionInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "action interval needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, a: f64) -> bool {
        self.lo <= a && a <= self.hi
    }

    pub fn clip(&self, a: f64) -> f64 {
        self.hi.min(self.lo.max(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    /// Draw from the unbounded distribution (clamped to `±RAW_ACTION_BOUND`).
    pub raw: f64,
    /// `raw` projected into the action interval.
    pub clipped: f64,
}

/// Policy parameters: location weights `theta`, fixed scale `sigma`, family.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    theta: Vec<f64>,
    sigma: f64,
    family: Family,
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>, sigma: f64, family: Family) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("theta has non-finite components".into()));
        }
        family.validate()?;
        Ok(Self {
            theta,
            sigma,
            family,
        })
    }

    pub fn zeros(dim: usize, sigma: f64, family: Family) -> Result<Self> {
        Self::new(vec![0.0; dim], sigma, family)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Same scale and family, new location weights.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(theta, self.sigma, self.family)
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                actual: features.len(),
            });
        }
        Ok(())
    }

    /// Location `θᵀφ(s)`.
    pub fn mean(&self, features: &[f64]) -> Result<f64> {
        self.check_dim(features)?;
        Ok(dot(&self.theta, features))
    }

    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        interval: ActionInterval,
        rng: &mut R,
    ) -> Result<ActionSample> {
        let loc = self.mean(features)?;
        Ok(self.sample_at(loc, interval, rng))
    }

    pub(crate) fn sample_at<R: Rng + ?Sized>(
        &self,
        loc: f64,
        interval: ActionInterval,
        rng: &mut R,
    ) -> ActionSample {
        let z = self.family.sample_standard(rng);
        let raw = self
            .sigma
            .mul_add(z, loc)
            .clamp(-RAW_ACTION_BOUND, RAW_ACTION_BOUND);
        ActionSample {
            raw,
            clipped: interval.clip(raw),
        }
    }

    pub fn log_prob(&self, features: &[f64], raw_action: f64) -> Result<f64> {
        let loc = self.mean(features)?;
        if !raw_action.is_finite() {
            return Err(Error::Domain(format!(
                "log_prob at non-finite action {raw_action}"
            )));
        }
        let z = (raw_action - loc) / self.sigma;
        Ok(self.family.std_log_density(z) - self.sigma.ln())
    }

    /// Scalar `c` such that `∇_θ log π_θ(a|s) = c · φ(s)`.
    pub fn score_factor(&self, loc: f64, raw_action: f64) -> Result<f64> {
        if !(loc.is_finite() && raw_action.is_finite()) {
            return Err(Error::Domain(format!(
                "score at non-finite input (loc {loc}, action {raw_action})"
            )));
        }
        let z = (raw_action - loc) / self.sigma;
        Ok(self.family.std_score(z) / self.sigma)
    }

    pub fn score(&self, features: &[f64], raw_action: f64) -> Result<GradientVector> {
        let loc = self.mean(features)?;
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::Domain("score with non-finite features".into()));
        }
        let c = self.score_factor(loc, raw_action)?;
        Ok(features.iter().map(|f| c * f).collect::<Vec<_>>().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Role, StreamSplitter};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn p(theta: &[f64], sigma: f64, family: Family) -> PolicyParams {
        PolicyParams::new(theta.to_vec(), sigma, family).unwrap()
    }

    #[test]
    fn mean_is_inner_product() {
        let phi = [0.9, 1.0];
        assert_eq!(p(&[0.0, 0.0], 1.0, Family::Cauchy).mean(&phi).unwrap(), 0.0);
        assert_eq!(p(&[1.0, 0.0], 1.0, Family::Cauchy).mean(&phi).unwrap(), 0.9);
        assert!(close(
            p(&[0.5, -0.2], 1.0, Family::Cauchy).mean(&phi).unwrap(),
            0.25,
            1e-15
        ));
        assert!(matches!(
            p(&[0.5], 1.0, Family::Cauchy).mean(&phi),
            Err(Error::Dimension {
                expected: 1,
                actual: 2
            })
        ));
    }

    #[test]
    fn degenerate_scale_collapses_to_mean() {
        let params = p(&[0.3], 1e-12, Family::Gaussian);
        let mut rng = StreamSplitter::new(7).stream(Role::Eval, 0, 0);
        let a = params
            .sample_action(&[1.0], ActionInterval::new(-1.0, 1.0).unwrap(), &mut rng)
            .unwrap();
        assert!(close(a.clipped, 0.3, 1e-9));
    }

    #[test]
    fn clipping_rule() {
        let interval = ActionInterval::new(-0.1, 0.1).unwrap();
        assert_eq!(interval.clip(7.4), 0.1);
        assert_eq!(interval.clip(-7.4), -0.1);
        assert_eq!(interval.clip(0.05), 0.05);
    }

    #[test]
    fn cauchy_half_mass_beyond_scale() {
        let params = p(&[0.0], 1.0, Family::Cauchy);
        let interval = ActionInterval::new(-1.0, 1.0).unwrap();
        let mut rng = StreamSplitter::new(11).stream(Role::Eval, 0, 0);
        let n = 1_000_000;
        let beyond = (0..n)
            .filter(|_| {
                params
                    .sample_action(&[1.0], interval, &mut rng)
                    .unwrap()
                    .raw
                    .abs()
                    > 1.0
            })
            .count();
        let frac = beyond as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn raw_draws_are_clamped() {
        let params = p(&[1e9], 1.0, Family::Cauchy);
        let mut rng = StreamSplitter::new(1).stream(Role::Eval, 0, 0);
        let a = params
            .sample_action(&[1.0], ActionInterval::new(-1.0, 1.0).unwrap(), &mut rng)
            .unwrap();
        assert_eq!(a.raw, RAW_ACTION_BOUND);
        assert_eq!(a.clipped, 1.0);
    }

    #[test]
    fn log_prob_at_mode() {
        let phi = [0.9, 1.0];
        let cauchy = p(&[0.5, -0.2], 1.0, Family::Cauchy);
        assert!(close(
            cauchy.log_prob(&phi, 0.25).unwrap(),
            -1.1447298858494002,
            1e-12
        ));
        let gauss = p(&[0.5, -0.2], 1.0, Family::Gaussian);
        assert!(close(
            gauss.log_prob(&phi, 0.25).unwrap(),
            -0.9189385332046727,
            1e-12
        ));
        // z = 1 at sigma = 0.5: -ln(0.5 π) - ln 2
        let half = p(&[0.0], 0.5, Family::Cauchy);
        assert!(close(
            half.log_prob(&[1.0], 0.5).unwrap(),
            -1.1447298858494002,
            1e-12
        ));
        assert!(matches!(
            half.log_prob(&[1.0], f64::NAN),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn score_examples() {
        for family in [
            Family::Gaussian,
            Family::Cauchy,
            Family::Laplace,
            Family::StudentT { nu: 2.0 },
        ] {
            let params = p(&[0.5, -0.2], 0.7, family);
            let s = params.score(&[0.9, 1.0], 0.25).unwrap();
            assert!(s.iter().all(|&x| x == 0.0), "{family}: {s:?}");
        }
        let cauchy = p(&[0.0, 0.0], 1.0, Family::Cauchy);
        assert_eq!(&*cauchy.score(&[0.9, 1.0], 1.0).unwrap(), &[0.9, 1.0]);
        let gauss = p(&[0.0], 0.5, Family::Gaussian);
        assert_eq!(&*gauss.score(&[1.0], 0.25).unwrap(), &[1.0]);
        assert!(cauchy.score(&[0.9, 1.0], f64::INFINITY).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PolicyParams::new(vec![0.0], 0.0, Family::Cauchy).is_err());
        assert!(PolicyParams::new(vec![f64::NAN], 1.0, Family::Cauchy).is_err());
        assert!(PolicyParams::new(vec![0.0], 1.0, Family::StudentT { nu: -1.0 }).is_err());
    }

    #[test]
    fn deterministic_given_stream() {
        let params = p(&[0.1, 0.2], 0.5, Family::StudentT { nu: 3.0 });
        let interval = ActionInterval::new(-1.0, 1.0).unwrap();
        let draw = || {
            let mut rng = StreamSplitter::new(5).stream(Role::RolloutCurrent, 2, 3);
            (0..100)
                .map(|_| {
                    params
                        .sample_action(&[0.3, 1.0], interval, &mut rng)
                        .unwrap()
                        .raw
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn family_names() {
        for s in ["gaussian", "cauchy", "laplace", "student_t"] {
            assert_eq!(s.parse::<Family>().unwrap().to_string(), s);
        }
        assert!("normal".parse::<Family>().is_err());
    }
}
