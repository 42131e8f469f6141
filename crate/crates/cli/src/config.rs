//! Experiment and sweep configuration files.
//!
//! Both formats are TOML with a mandatory `schema_version` field; unknown
//! keys are rejected so a typo in a hyperparameter name cannot silently run
//! the wrong experiment. Validation collects every violated field before
//! reporting.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dan_core::analysis::CollapseStudy;
use dan_core::data::{ring_mixture, DataError, MixtureSpec, NoiseSpec};
use dan_core::evaluation::EvalSettings;
use dan_core::training::{NetworkDims, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Target distribution: either the ring shorthand or an explicit mixture.
/// Exactly one must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    pub modes: usize,
    pub radius: f64,
    pub variance: f64,
}

impl DataSection {
    pub fn resolve(&self) -> Result<MixtureSpec, DataError> {
        match (&self.ring, &self.mixture) {
            (Some(ring), None) => ring_mixture(ring.modes, ring.radius, ring.variance),
            (None, Some(mixture)) => {
                mixture.validate()?;
                Ok(mixture.clone())
            }
            (Some(_), Some(_)) => Err(DataError::InvalidMixture(
                "specify either [data.ring] or [data.mixture], not both".into(),
            )),
            (None, None) => Err(DataError::InvalidMixture(
                "missing target distribution: add [data.ring] or [data.mixture]".into(),
            )),
        }
    }
}

/// Evaluation thresholds and sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_samples: usize,
    pub capture_radius_sigmas: f64,
    pub capture_min_frac: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd_bandwidth: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_samples: 10_000,
            capture_radius_sigmas: 3.0,
            capture_min_frac: 0.02,
            mmd_bandwidth: None,
        }
    }
}

impl EvalSection {
    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            capture_radius_sigmas: self.capture_radius_sigmas,
            capture_min_frac: self.capture_min_frac,
            mmd_bandwidth: self.mmd_bandwidth,
            target_weights: None,
        }
    }
}

/// One experiment, end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub train: TrainConfig,
    pub data: DataSection,
    pub noise: NoiseSpec,
    pub networks: NetworkDims,
    #[serde(default)]
    pub eval: EvalSection,
    /// Present only for runs of the 1-D gradient-weighting study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<CollapseStudy>,
}

impl ExperimentConfig {
    /// Validate everything, collecting all violations.
    pub fn validate(&self) -> Result<MixtureSpec, ConfigError> {
        let mut violations = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            violations.push(format!(
                "schema_version {} unsupported, expected {SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        violations.extend(self.train.violations());
        let mixture = match self.data.resolve() {
            Ok(m) => Some(m),
            Err(e) => {
                violations.push(e.to_string());
                None
            }
        };
        if let Err(e) = self.noise.validate() {
            violations.push(e.to_string());
        }
        if let Some(m) = &mixture {
            violations.extend(self.networks.violations(self.noise.dim, m.dim));
        }
        if self.eval.n_samples == 0 {
            violations.push("eval.n_samples must be at least 1".into());
        }
        if !(self.eval.capture_radius_sigmas > 0.0) {
            violations.push("eval.capture_radius_sigmas must be positive".into());
        }
        if !(0.0..1.0).contains(&self.eval.capture_min_frac) {
            violations.push("eval.capture_min_frac must lie in [0, 1)".into());
        }
        if let Some(bw) = self.eval.mmd_bandwidth {
            if !(bw > 0.0) {
                violations.push("eval.mmd_bandwidth must be positive".into());
            }
        }
        if let Some(study) = &self.analysis {
            if study.grid_points < 2 {
                violations.push("analysis.grid_points must be at least 2".into());
            }
            if !(study.grid_lo < study.grid_hi) {
                violations.push("analysis.grid_lo must be below analysis.grid_hi".into());
            }
            if !(study.sigma > 0.0) {
                violations.push("analysis.sigma must be positive".into());
            }
        }
        match (violations.is_empty(), mixture) {
            (true, Some(m)) => Ok(m),
            (_, _) => Err(ConfigError::Invalid(violations)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Multi-seed sweep over one base experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema_version: u32,
    /// Built-in profile name or path to an experiment config, relative to
    /// the sweep file.
    pub base: String,
    pub seeds: Vec<u64>,
    pub parallelism: usize,
    /// Per-run tweaks, matched by seed.
    #[serde(default, rename = "override", skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<RunOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverride {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversary_period: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

impl RunOverride {
    pub fn apply(&self, train: &mut TrainConfig) {
        if let Some(v) = self.iterations {
            train.iterations = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.adversary_period {
            train.adversary_period = v;
        }
        if let Some(v) = self.lambda1 {
            train.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            train.lambda2 = v;
        }
        if let Some(v) = self.lr {
            train.lr = v;
        }
        if let Some(v) = self.snapshot_every {
            train.snapshot_every = v;
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut violations = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            violations.push(format!(
                "schema_version {} unsupported, expected {SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            violations.push("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            violations.push("seeds must be distinct".into());
        }
        if self.parallelism < 1 {
            violations.push("parallelism must be at least 1".into());
        }
        for o in &self.overrides {
            if !self.seeds.contains(&o.seed) {
                violations.push(format!("override for seed {} with no matching seed", o.seed));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }
}

fn parse_error(path: &Path, err: impl std::fmt::Display) -> ConfigError {
    ConfigError::Parse {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

pub fn read_experiment_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| parse_error(path, e))
}

pub fn read_sweep_file(path: &Path) -> Result<SweepSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| parse_error(path, e))
}
