use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hypertune_core::{Configuration, StrategyKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::HarnessError;
use crate::registry::registry_lookup;

/// Search strategy of an experiment. `default` evaluates the benchmark's
/// untuned configuration once per seed and serves as the comparison baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    Random,
    Grid,
    Bayes,
    Default,
}

impl StrategyChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Grid => "grid",
            Self::Bayes => "bayes",
            Self::Default => "default",
        }
    }

    pub fn kind(self) -> Option<StrategyKind> {
        match self {
            Self::Random => Some(StrategyKind::Random),
            Self::Grid => Some(StrategyKind::Grid),
            Self::Bayes => Some(StrategyKind::Bayes),
            Self::Default => None,
        }
    }
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyChoice {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "grid" => Ok(Self::Grid),
            "bayes" => Ok(Self::Bayes),
            "default" => Ok(Self::Default),
            other => Err(HarnessError::InvalidConfig(format!(
                "unknown strategy '{other}' (expected random, grid, bayes or default)"
            ))),
        }
    }
}

/// Where a benchmark's data comes from: generated from parameters
/// (all optional, see the per-benchmark defaults) or read from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic(Map<String, Value>),
    File(PathBuf),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::Synthetic(Map::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    pub strategy: StrategyChoice,
    pub budget: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    /// Parameters held fixed; the search runs over the remaining ones.
    #[serde(default, skip_serializing_if = "Configuration::is_empty")]
    pub overrides: Configuration,
    /// Seed of the benchmark objective itself (splits, initialization).
    /// Shared by all strategies so they optimize the same function.
    #[serde(default)]
    pub objective_seed: u64,
}

impl ExperimentConfig {
    pub fn new(benchmark: impl Into<String>, strategy: StrategyChoice, budget: usize, seeds: Vec<u64>) -> Self {
        Self {
            benchmark: benchmark.into(),
            strategy,
            budget,
            seeds,
            dataset: DatasetSpec::default(),
            overrides: Configuration::new(),
            objective_seed: 0,
        }
    }

    /// Reads a JSON config; a relative dataset file path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigRead {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            source: e,
        })?;
        if let DatasetSpec::File(p) = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let entry = registry_lookup(&self.benchmark)?;
        if self.budget == 0 {
            return Err(HarnessError::InvalidConfig("budget must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("seeds must be non-empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(HarnessError::InvalidConfig("seeds must be distinct".into()));
        }
        for (name, _) in self.overrides.iter() {
            if entry.space.get(name).is_none() {
                return Err(HarnessError::InvalidConfig(format!(
                    "override '{name}' is not a parameter of {}",
                    self.benchmark
                )));
            }
        }
        let merged = entry.untuned.clone().merged(&self.overrides);
        let violations = entry.space.validate(&merged);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(HarnessError::InvalidConfig(format!("invalid overrides: {}", msgs.join("; "))));
        }
        if self.overrides.len() == entry.space.len() && self.strategy != StrategyChoice::Default {
            return Err(HarnessError::InvalidConfig("overrides fix every parameter; nothing to search".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypertune_core::ParamValue;

    #[test]
    fn parses_minimal_config() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"benchmark":"testfn-bowl","strategy":"bayes","budget":5,"seeds":[0,1]}"#).unwrap();
        assert_eq!(cfg.dataset, DatasetSpec::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn parses_dataset_variants() {
        let a: DatasetSpec = serde_json::from_str(r#"{"synthetic":{"n_docs":100}}"#).unwrap();
        assert!(matches!(a, DatasetSpec::Synthetic(m) if m["n_docs"] == 100));
        let b: DatasetSpec = serde_json::from_str(r#"{"file":"data.csv"}"#).unwrap();
        assert_eq!(b, DatasetSpec::File("data.csv".into()));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ExperimentConfig::new("testfn-bowl", StrategyChoice::Random, 5, vec![0]);
        assert!(ExperimentConfig { budget: 0, ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { seeds: vec![], ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { seeds: vec![1, 1], ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig {
            benchmark: "nope".into(),
            ..base.clone()
        }
        .validate()
        .is_err());
        let bad_override = Configuration::new().with("zz", ParamValue::Real(0.0));
        assert!(ExperimentConfig {
            overrides: bad_override,
            ..base.clone()
        }
        .validate()
        .is_err());
        let out_of_range = Configuration::new().with("x", ParamValue::Real(99.0));
        assert!(ExperimentConfig {
            overrides: out_of_range,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"benchmark":"als","strategy":"grid","budget":5,"seeds":[0],"extra":1}"#);
        assert!(r.is_err());
    }
}
