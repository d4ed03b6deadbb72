//! The run configuration file.
//!
//! ```toml
//! [run]
//! seed = 42
//! out = "results"
//! experiments = ["gate_safety"]
//!
//! [gate_safety]
//! trials = 20000
//! ```
//!
//! Every section is optional and falls back to its defaults. Unknown keys
//! are errors.

use std::path::{Path, PathBuf};

use eto::lab::{
    BigSourceConfig, ExperimentId, FigureConfig, ForcedMappingConfig, GateSafetyConfig, LabConfig, MappingGainConfig,
    NflConfig, RaceConfig, RankInferenceConfig, ThresholdConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Selection for `verify`; defaults to the six core experiments.
    pub experiments: Option<Vec<ExperimentId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub rank_inference: RankInferenceConfig,
    pub mapping_gain: MappingGainConfig,
    pub threshold: ThresholdConfig,
    pub gate_safety: GateSafetyConfig,
    pub big_source: BigSourceConfig,
    pub forced_mapping: ForcedMappingConfig,
    pub nfl: NflConfig,
    pub race: RaceConfig,
    pub figures: FigureConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(list) = &self.run.experiments {
            if list.is_empty() {
                return Err(CliError::Config("run.experiments must not be empty".into()));
            }
        }
        self.lab().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn lab(&self) -> LabConfig {
        LabConfig {
            rank_inference: self.rank_inference.clone(),
            mapping_gain: self.mapping_gain.clone(),
            threshold: self.threshold.clone(),
            gate_safety: self.gate_safety.clone(),
            big_source: self.big_source.clone(),
            forced_mapping: self.forced_mapping.clone(),
            nfl: self.nfl.clone(),
            race: self.race.clone(),
            figures: self.figures.clone(),
        }
    }

    pub fn experiments(&self) -> Vec<ExperimentId> {
        self.run
            .experiments
            .clone()
            .unwrap_or_else(|| ExperimentId::CORE.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = r#"
[run]
seed = 7
experiments = ["threshold", "nfl"]

[threshold]
trials = 5

[race]
races = 3

[race.weak]
mu = 2
lambda = 4
sigma0 = 3.0
self_adaptive = false
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.run.seed, Some(7));
        assert_eq!(cfg.threshold.trials, 5);
        assert_eq!(cfg.race.weak.mu, 2);
        assert_eq!(cfg.experiments(), vec![ExperimentId::Threshold, ExperimentId::Nfl]);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        let err = RunConfig::parse("[threshold]\ntrails = 5\n").unwrap_err().to_string();
        assert!(err.contains("trails"), "{err}");
        assert!(err.contains("line 2"), "{err}");
        assert!(RunConfig::parse("[bogus]\n").is_err());
        assert!(RunConfig::parse("[run]\nexperiments = [\"no_such_experiment\"]\n").is_err());
        assert!(RunConfig::parse("[run]\nexperiments = []\n").is_err());
        assert!(RunConfig::parse("[threshold]\ntrials = 0\n").is_err());
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn shipped_config_is_the_default() {
        let text = include_str!("../../../configs/default.toml");
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.run.seed, Some(DEFAULT_SEED));
        assert_eq!(cfg.run.out.as_deref(), Some(Path::new(DEFAULT_OUT)));
        assert_eq!(cfg.experiments(), ExperimentId::CORE.to_vec());
        assert_eq!(cfg.lab(), RunConfig::default().lab());
    }
}
