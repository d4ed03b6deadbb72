//! Experiments that turn each claim about transfer into a pass/fail report.
//!
//! Every experiment takes a master seed. Trial `i` draws its own seed from a
//! ChaCha stream keyed by the experiment, so trials can run in parallel and
//! results are aggregated by trial index; reports are reproducible bit for
//! bit.

pub mod experiments;
pub mod figures;
pub mod race;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolver::EvolverError;
use crate::kernel::KernelError;
use crate::nfl::NflError;
use crate::similarity::SimilarityError;
use crate::tasks::TaskError;
use crate::transfer::TransferError;

pub use experiments::{
    BigSourceConfig, ForcedMappingConfig, GateSafetyConfig, MappingGainConfig, NflConfig, RankInferenceConfig,
    ThresholdConfig,
};
pub use figures::{figure_data, Cell, FigureConfig, FigureId, Table};
pub use race::RaceConfig;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Evolver(#[from] EvolverError),
    #[error(transparent)]
    Nfl(#[from] NflError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    /// Similarity ranks equal usefulness ranks.
    RankInference,
    /// Mapping raises usefulness.
    MappingGain,
    /// A calibrated threshold separates useful from useless knowledge.
    Threshold,
    /// Exactly the methods with an evaluation stage never lose.
    GateSafety,
    /// Larger pools make a superior candidate near certain.
    BigSource,
    /// A large enough mapping gain forces positive transfer.
    ForcedMapping,
    /// Finite no-free-lunch accounting.
    Nfl,
    /// Evolver with and without transfer.
    Race,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::RankInference,
        ExperimentId::MappingGain,
        ExperimentId::Threshold,
        ExperimentId::GateSafety,
        ExperimentId::BigSource,
        ExperimentId::ForcedMapping,
        ExperimentId::Nfl,
        ExperimentId::Race,
    ];

    /// The default `verify` selection.
    pub const CORE: [ExperimentId; 6] = [
        ExperimentId::RankInference,
        ExperimentId::MappingGain,
        ExperimentId::Threshold,
        ExperimentId::GateSafety,
        ExperimentId::BigSource,
        ExperimentId::ForcedMapping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::RankInference => "rank_inference",
            ExperimentId::MappingGain => "mapping_gain",
            ExperimentId::Threshold => "threshold",
            ExperimentId::GateSafety => "gate_safety",
            ExperimentId::BigSource => "big_source",
            ExperimentId::ForcedMapping => "forced_mapping",
            ExperimentId::Nfl => "nfl",
            ExperimentId::Race => "race",
        }
    }

    fn stream(self) -> u64 {
        Self::ALL.iter().position(|&e| e == self).unwrap() as u64 + 1
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::InvalidConfig(format!("unknown experiment '{s}'")))
    }
}

/// Seed of trial `index` of `experiment` under `master`.
pub fn trial_seed(master: u64, experiment: ExperimentId, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(experiment.stream());
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
}

impl Relation {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Relation::Eq => value == bound,
            Relation::Ge => value >= bound,
            Relation::Gt => value > bound,
            Relation::Le => value <= bound,
            Relation::Lt => value < bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "==",
            Relation::Ge => ">=",
            Relation::Gt => ">",
            Relation::Le => "<=",
            Relation::Lt => "<",
        }
    }
}

/// One verdict-bearing comparison `value relation bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation,
            bound,
            passed: relation.holds(value, bound),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub master_seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    /// Confidence level of any interval used by the checks.
    pub confidence: Option<f64>,
    pub checks: Vec<Check>,
    /// Descriptive statistics that do not affect the verdict.
    pub statistics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

impl ExperimentReport {
    pub fn new(experiment: ExperimentId, master_seed: u64, trials: usize, tolerance: f64) -> Self {
        Self {
            experiment,
            master_seed,
            trials,
            tolerance,
            confidence: None,
            checks: Vec::new(),
            statistics: BTreeMap::new(),
            notes: Vec::new(),
            verdict: Verdict::Pass,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, relation: Relation, bound: f64) {
        self.checks.push(Check::new(name, value, relation, bound));
        self.verdict = self.recompute_verdict();
    }

    pub fn stat(&mut self, name: impl Into<String>, value: f64) {
        self.statistics.insert(name.into(), value);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// The verdict implied by the stored checks alone.
    pub fn recompute_verdict(&self) -> Verdict {
        let ok = !self.checks.is_empty()
            && self
                .checks
                .iter()
                .all(|c| c.relation.holds(c.value, c.bound));
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} (seed {}, trials {}, tolerance {:e}): {:?}\n",
            self.experiment, self.master_seed, self.trials, self.tolerance, self.verdict
        );
        if let Some(c) = self.confidence {
            out.push_str(&format!("  confidence {c}\n"));
        }
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            out.push_str(&format!(
                "  [{}] {:width$}  {:>24} {:2} {:<24}\n",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                format!("{:.12e}", c.value),
                c.relation.symbol(),
                format!("{:.12e}", c.bound),
            ));
        }
        let width = self.statistics.keys().map(|k| k.len()).max().unwrap_or(0);
        for (k, v) in &self.statistics {
            out.push_str(&format!("  {k:width$}  {v:.12e}\n"));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        out
    }
}

/// Parameters of every experiment; each block has working defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
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

impl LabConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        self.rank_inference.validate()?;
        self.mapping_gain.validate()?;
        self.threshold.validate()?;
        self.gate_safety.validate()?;
        self.big_source.validate()?;
        self.forced_mapping.validate()?;
        self.nfl.validate()?;
        self.race.validate()?;
        self.figures.validate()
    }
}

pub fn run_experiment(id: ExperimentId, config: &LabConfig, master_seed: u64) -> Result<ExperimentReport, LabError> {
    match id {
        ExperimentId::RankInference => experiments::rank_inference(&config.rank_inference, master_seed),
        ExperimentId::MappingGain => experiments::mapping_gain(&config.mapping_gain, master_seed),
        ExperimentId::Threshold => experiments::threshold(&config.threshold, master_seed),
        ExperimentId::GateSafety => experiments::gate_safety(&config.gate_safety, master_seed),
        ExperimentId::BigSource => experiments::big_source(&config.big_source, master_seed),
        ExperimentId::ForcedMapping => experiments::forced_mapping(&config.forced_mapping, master_seed),
        ExperimentId::Nfl => experiments::nfl(&config.nfl),
        ExperimentId::Race => race::race(&config.race, master_seed).map(|r| r.report),
    }
}

pub(crate) fn require(cond: bool, msg: &str) -> Result<(), LabError> {
    if cond {
        Ok(())
    } else {
        Err(LabError::InvalidConfig(msg.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = trial_seed(42, ExperimentId::GateSafety, 7);
        assert_eq!(a, trial_seed(42, ExperimentId::GateSafety, 7));
        assert_ne!(a, trial_seed(42, ExperimentId::GateSafety, 8));
        assert_ne!(a, trial_seed(42, ExperimentId::Threshold, 7));
        assert_ne!(a, trial_seed(43, ExperimentId::GateSafety, 7));
    }

    #[test]
    fn verdict_follows_checks() {
        let mut r = ExperimentReport::new(ExperimentId::Nfl, 0, 1, 0.0);
        assert_eq!(r.recompute_verdict(), Verdict::Fail);
        r.check("a", 1.0, Relation::Ge, 0.0);
        assert!(r.passed());
        r.check("b", 0.5, Relation::Lt, 0.5);
        assert!(!r.passed());
        assert!(r.to_text().contains("FAIL"));
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
    }
}
