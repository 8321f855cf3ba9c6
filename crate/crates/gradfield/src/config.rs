//! Run configuration: one JSON document per run, fully validated up front.
//!
//! ```json
//! {
//!   "schema": "gradfield-run/1",
//!   "train": { ... },
//!   "gmm": { "weights": [...], "means": [...], "covariances": [...] },
//!   "diagnostics": { "probe_points": 20, "fd_step": 1e-5, "eval_samples": 4096 }
//! }
//! ```
//!
//! Unknown keys are rejected everywhere: a typo in a config should fail the
//! run, not silently fall back to a default.

use serde::{Deserialize, Serialize};

use crate::objectives::{config_hash_of, TrainConfig, TrainError};
use crate::toydata::GmmSpec;

pub const RUN_SCHEMA: &str = "gradfield-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_probe_points")]
    pub probe_points: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
}

fn default_probe_points() -> usize {
    20
}
fn default_fd_step() -> f64 {
    1e-5
}
fn default_eval_samples() -> usize {
    4096
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            probe_points: default_probe_points(),
            fd_step: default_fd_step(),
            eval_samples: default_eval_samples(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.probe_points == 0 {
            return Err(TrainError::Config("probe_points must be at least 1".into()));
        }
        if self.fd_step.is_nan() || self.fd_step <= 0.0 || !self.fd_step.is_finite() {
            return Err(TrainError::Config(format!(
                "fd_step must be positive, got {}",
                self.fd_step
            )));
        }
        if self.eval_samples == 0 {
            return Err(TrainError::Config("eval_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub train: TrainConfig,
    pub gmm: GmmSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, TrainError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| TrainError::Config(format!("cannot parse config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.schema != RUN_SCHEMA {
            return Err(TrainError::Config(format!(
                "unsupported config schema '{}', expected '{RUN_SCHEMA}'",
                self.schema
            )));
        }
        self.train.validate()?;
        self.gmm
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.diagnostics.validate()?;
        Ok(())
    }

    /// Canonical serialized form (field order fixed by the struct).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        config_hash_of(&self.train, &self.gmm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Parametrization;

    fn sample_config() -> String {
        r#"{
            "schema": "gradfield-run/1",
            "train": {
                "seed": 7,
                "noise_sigma": 0.5,
                "lr": 0.2,
                "steps": 100,
                "batch_size": 16,
                "eval_every": 50,
                "parametrization": "implicit_phi",
                "hidden_widths": [8, 8]
            },
            "gmm": {
                "weights": [0.5, 0.5],
                "means": [[2.0, 0.0], [-2.0, 0.0]],
                "covariances": [[1.0, 1.0], [1.0, 1.0]]
            }
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::parse(&sample_config()).unwrap();
        assert_eq!(cfg.train.parametrization, Parametrization::ImplicitPhi);
        assert_eq!(cfg.diagnostics.probe_points, 20);
        assert_eq!(cfg.diagnostics.eval_samples, 4096);
        assert_eq!(cfg.train.momentum, 0.0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = sample_config().replace("\"seed\": 7", "\"seed\": 7, \"sneaky\": 1");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("sneaky"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let text = sample_config().replace("\"noise_sigma\": 0.5", "\"noise_sigma\": 0.0");
        assert!(RunConfig::parse(&text).is_err());

        let text = sample_config().replace("\"weights\": [0.5, 0.5]", "\"weights\": [0.9, 0.5]");
        assert!(RunConfig::parse(&text).is_err());

        let text = sample_config().replace("gradfield-run/1", "gradfield-run/9");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::parse(&sample_config()).unwrap();
        let b = RunConfig::parse(&sample_config()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let text = sample_config().replace("\"seed\": 7", "\"seed\": 8");
        let c = RunConfig::parse(&text).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
