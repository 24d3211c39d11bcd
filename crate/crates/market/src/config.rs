//! Session configuration, loadable from TOML or JSON.
//!
//! ```toml
//! service = "matching"        # or "fitting"
//! n = 100                     # contributors
//! beta = 10                   # attributes per profile
//! theta = 10                  # ratings lie in [0, theta]
//! delta = 12                  # matching threshold
//! backend = "clear"           # or "bgn"
//! modulus_bits = 1024         # BGN only
//! bound = 1048576             # plaintext bound T
//! depth = 4                   # tracing depth; omit for unbounded
//! corrupt_fraction = 0.05     # contributors submitting invalid signatures
//! seed = 7
//!
//! [sampling]                  # matching completeness checks
//! assumed_corruption = 0.2
//! checks = 10
//!
//! [fit_checks]                # fitting outcome checks
//! diagonal = true
//! random_entries = 0
//! refit = { fraction = 0.1, threshold = 0.25, metric = "standardized_max" }
//!
//! [data]                      # omit for uniform synthetic ratings
//! source = "synthetic"
//! distribution = { kind = "zipf", exponent = 1.1 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tpdm::phe::bgn::MIN_MODULUS_BITS;
use tpdm::phe::DEFAULT_BOUND;
use tpdm::services::fitting::{self, DistanceMetric, SubsetRefit};
use tpdm::services::{matching, ServiceError, ServiceKind};

use crate::dataset::Distribution;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Bgn,
    #[default]
    Clear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub assumed_corruption: f64,
    pub checks: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { assumed_corruption: 0.2, checks: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitConfig {
    pub fraction: f64,
    pub threshold: f64,
    #[serde(default = "default_metric")]
    pub metric: DistanceMetric,
}

fn default_metric() -> DistanceMetric {
    DistanceMetric::StandardizedMax
}

impl RefitConfig {
    pub fn with_seed(&self, seed: u64) -> SubsetRefit {
        SubsetRefit { fraction: self.fraction, threshold: self.threshold, metric: self.metric, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitChecks {
    #[serde(default = "yes")]
    pub diagonal: bool,
    #[serde(default)]
    pub random_entries: usize,
    #[serde(default)]
    pub refit: Option<RefitConfig>,
}

fn yes() -> bool {
    true
}

impl Default for FitChecks {
    fn default() -> Self {
        FitChecks { diagonal: true, random_entries: 0, refit: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Seeded synthetic data; uniform ratings for matching and a default
    /// Gaussian for fitting unless a distribution is given.
    Synthetic {
        #[serde(default)]
        distribution: Option<Distribution>,
    },
    Csv {
        path: PathBuf,
    },
    /// Profiles given inline, one row per contributor.
    Inline {
        rows: Vec<Vec<i64>>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { distribution: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub service: ServiceKind,
    pub n: usize,
    pub beta: usize,
    pub theta: u64,
    #[serde(default)]
    pub delta: u64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_bits")]
    pub modulus_bits: usize,
    #[serde(default = "default_bound")]
    pub bound: u64,
    #[serde(default)]
    pub depth: Option<u32>,
    #[serde(default)]
    pub corrupt_fraction: f64,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub fit_checks: FitChecks,
    #[serde(default)]
    pub data: DataSource,
    /// The consumer's profile for matching; drawn from the seed when absent.
    #[serde(default)]
    pub query: Option<Vec<i64>>,
    pub seed: u64,
}

fn default_bits() -> usize {
    1024
}

fn default_bound() -> u64 {
    DEFAULT_BOUND
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
}

impl SessionConfig {
    pub fn matching(n: usize, beta: usize, theta: u64, delta: u64, seed: u64) -> Self {
        SessionConfig {
            service: ServiceKind::Matching,
            n,
            beta,
            theta,
            delta,
            backend: Backend::Clear,
            modulus_bits: default_bits(),
            bound: DEFAULT_BOUND,
            depth: None,
            corrupt_fraction: 0.0,
            sampling: SamplingConfig::default(),
            fit_checks: FitChecks::default(),
            data: DataSource::default(),
            query: None,
            seed,
        }
    }

    pub fn fitting(n: usize, beta: usize, theta: u64, seed: u64) -> Self {
        SessionConfig { service: ServiceKind::Fitting, delta: 0, ..Self::matching(n, beta, theta, 0, seed) }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: SessionConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Shape checks plus the fan-in guard for the chosen service.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n == 0 || self.beta == 0 {
            return bad("n and beta must be positive");
        }
        if !(0.0..=1.0).contains(&self.corrupt_fraction) {
            return bad("corrupt_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.sampling.assumed_corruption) {
            return bad("sampling.assumed_corruption must lie in [0, 1]");
        }
        if self.backend == Backend::Bgn && self.modulus_bits < MIN_MODULUS_BITS {
            return Err(ConfigError::Invalid(format!("modulus_bits must be at least {MIN_MODULUS_BITS}")));
        }
        if let Some(q) = &self.query {
            if q.len() != self.beta || q.iter().any(|&v| v < 0 || v as u64 > self.theta) {
                return bad("query must have beta ratings in [0, theta]");
            }
        }
        if let Some(r) = &self.fit_checks.refit {
            if !(r.fraction > 0.0 && r.fraction <= 1.0) || r.threshold < 0.0 {
                return bad("refit fraction must lie in (0, 1] and threshold be non-negative");
            }
        }
        match self.service {
            ServiceKind::Matching => matching::check_session(self.beta, self.theta, self.bound)?,
            ServiceKind::Fitting => fitting::check_session(self.n, self.theta, self.bound)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_with_defaults() {
        let cfg = SessionConfig::parse(
            r#"
            service = "matching"
            n = 100
            beta = 10
            theta = 10
            delta = 12
            seed = 1
            "#,
        )
        .unwrap();
        assert_eq!(cfg, SessionConfig::matching(100, 10, 10, 12, 1));
        let back = SessionConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let json = SessionConfig::parse(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(json, cfg);
    }

    #[test]
    fn nested_sections() {
        let cfg = SessionConfig::parse(
            r#"
            service = "fitting"
            n = 50
            beta = 3
            theta = 10
            backend = "bgn"
            modulus_bits = 256
            depth = 3
            seed = 2
            [fit_checks]
            random_entries = 2
            refit = { fraction = 0.2, threshold = 0.3 }
            [data]
            source = "synthetic"
            distribution = { kind = "zipf", exponent = 1.2 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.backend, Backend::Bgn);
        assert_eq!(cfg.depth, Some(3));
        assert_eq!(cfg.fit_checks.refit.unwrap().metric, DistanceMetric::StandardizedMax);
        assert!(matches!(cfg.data, DataSource::Synthetic { distribution: Some(Distribution::Zipf { .. }) }));
    }

    #[test]
    fn rejects_bad_shapes_and_fan_in() {
        assert!(
            SessionConfig::parse("service = \"matching\"\nn = 1\nbeta = 1\ntheta = 1\nseed = 1\nbogus = 3").is_err()
        );
        let mut cfg = SessionConfig::matching(10, 10, 400, 1, 1);
        assert!(matches!(cfg.validate(), Err(ConfigError::Service(ServiceError::FanIn { .. }))));
        cfg = SessionConfig::fitting(20_000, 8, 10, 1);
        assert!(cfg.validate().is_err());
        cfg = SessionConfig::fitting(10_000, 8, 10, 1);
        assert!(cfg.validate().is_ok());
        cfg.backend = Backend::Bgn;
        cfg.modulus_bits = 128;
        assert!(cfg.validate().is_err());
    }
}
