//! Experiment configuration: one JSON file fully determines an experiment.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::change::{batch_change_prob, ChangeSpec, ObservationModel};
use crate::net::{stability_margin, NetConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unstable network: stability margin {margin:.6} is not positive (N/period must stay below sigma)")]
    Unstable { margin: f64 },
}

/// Everything a single experiment needs. Serialized as JSON with these exact
/// field names; see the repository README for a worked example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub net: NetConfig,
    pub change: ChangeSpec,
    pub obs: ObservationModel,
    /// False-alarm probability target.
    pub alpha: f64,
    /// Cost per slot of detection delay; only the stopping-problem solver
    /// reads it.
    #[serde(default = "default_cost")]
    pub cost_c: f64,
    /// Hard per-episode slot bound; exceeding it is an error, never a silent
    /// truncation.
    #[serde(default = "default_horizon_cap")]
    pub horizon_cap: u64,
    pub seed: u64,
    /// Default episode count for delay estimates.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
}

fn default_cost() -> f64 {
    0.01
}

fn default_horizon_cap() -> u64 {
    1_000_000
}

fn default_episodes() -> usize {
    20_000
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Structural validation. Stability is checked separately so that the
    /// instability demonstrations can still construct a config.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.net
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.change
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.obs
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ScenarioError::Invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.alpha >= 1.0 - self.change.rho {
            return Err(ScenarioError::Invalid(format!(
                "alpha = {} >= 1 - rho = {}: stopping immediately at time zero already meets \
                 the false-alarm target, so threshold detection is vacuous",
                self.alpha,
                1.0 - self.change.rho
            )));
        }
        if self.horizon_cap == 0 {
            return Err(ScenarioError::Invalid("horizon_cap must be positive".into()));
        }
        if !(self.cost_c > 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "cost_c must be positive, got {}",
                self.cost_c
            )));
        }
        Ok(())
    }

    /// Fails unless the queueing system is stable.
    pub fn require_stable(&self) -> Result<(), ScenarioError> {
        let margin = stability_margin(&self.net);
        if margin <= 0.0 {
            return Err(ScenarioError::Unstable { margin });
        }
        Ok(())
    }

    /// Per-sampling-period change probability for this scenario.
    pub fn batch_change_prob(&self) -> f64 {
        batch_change_prob(self.change.p, self.net.period)
    }

    /// Same scenario with a different sampling period.
    pub fn with_period(&self, period: u32) -> Self {
        let mut cfg = self.clone();
        cfg.net.period = period;
        cfg
    }

    /// Same scenario with a different sensor count and period.
    pub fn with_nodes(&self, n_sensors: usize, period: u32) -> Self {
        let mut cfg = self.clone();
        cfg.net.n_sensors = n_sensors;
        cfg.net.period = period;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "net": { "n_sensors": 10, "period": 34, "sigma": 0.3636 },
        "change": { "rho": 0.0, "p": 0.0005 },
        "obs": { "family": "gaussian", "pre_mean": 0.0, "pre_var": 1.0,
                 "post_mean": 1.0, "post_var": 1.0 },
        "alpha": 0.01,
        "seed": 12345
    }"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ScenarioConfig::from_json(GOOD).unwrap();
        assert_eq!(cfg.net.period, 34);
        assert_eq!(cfg.horizon_cap, 1_000_000);
        assert_eq!(cfg.episodes, 20_000);
        assert!((cfg.batch_change_prob() - 0.016860495110174528).abs() < 1e-15);
        cfg.require_stable().unwrap();
    }

    #[test]
    fn parse_error_carries_position() {
        let broken = GOOD.replace("\"alpha\": 0.01", "\"alpha\": oops");
        match ScenarioConfig::from_json(&broken) {
            Err(ScenarioError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_alpha_at_or_above_one_minus_rho() {
        let mut cfg = ScenarioConfig::from_json(GOOD).unwrap();
        cfg.change.rho = 0.4;
        cfg.alpha = 0.6;
        assert!(matches!(cfg.validate(), Err(ScenarioError::Invalid(_))));
        cfg.alpha = 0.59;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unstable_config_is_refused_where_it_matters() {
        let cfg = ScenarioConfig::from_json(GOOD).unwrap().with_period(27);
        cfg.validate().unwrap();
        assert!(matches!(
            cfg.require_stable(),
            Err(ScenarioError::Unstable { .. })
        ));
    }
}
