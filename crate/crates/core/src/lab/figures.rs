//! Plot data for the schematic figures, measured on synthetic families.
//!
//! Each figure yields one or more tables; writing them out is left to the
//! caller.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::kernel::{ranks, Knowledge, ObservableProperty};
use crate::nfl::{alignment, concentrated_distribution, SuccessPredicate};
use crate::similarity::SimilarityMetric;
use crate::tasks::{
    family_link, make_family, make_family_with, make_finite_family, sample_in_ball, FamilyKind, FamilySpec,
    FiniteDistribution, SourcePlacement, UsefulnessOracle,
};
use crate::transfer::evaluation::{calibrate_threshold, classify_pool, EvaluationGate};
use crate::transfer::mapping::{
    apply_mapping, learn_mapping, map_mixture, mixture_observable, optimize_mixture_weights, MappingFamily,
    MappingHypothesis,
};
use crate::transfer::retrieval::pool_similarities;

use super::experiments::nfl_optimizers;
use super::{require, LabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FigureId {
    /// Monotone links and a retrieval example.
    Links,
    /// Explicit mapping against the mixture hull.
    MappingHull,
    /// Similarity and usefulness before and after mapping.
    MappingGain,
    /// Gate partition of a pool, and the two-component washout curve.
    GatePartition,
    /// Optimizer performance against task distributions.
    Alignment,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [
        FigureId::Links,
        FigureId::MappingHull,
        FigureId::MappingGain,
        FigureId::GatePartition,
        FigureId::Alignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Links => "fig2",
            FigureId::MappingHull => "fig3",
            FigureId::MappingGain => "fig4",
            FigureId::GatePartition => "fig5",
            FigureId::Alignment => "fig6",
        }
    }

    fn stream(self) -> u64 {
        Self::ALL.iter().position(|&f| f == self).unwrap() as u64 + 101
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LabError::InvalidConfig(format!("unknown figure '{s}' (expected fig2..fig6)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(b as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem, e.g. `fig2_links`.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &str, columns: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FigureConfig {
    pub link_samples: usize,
    pub retrieval_sources: usize,
    pub hull_sources: usize,
    pub hull_samples: usize,
    pub mapping_trials: usize,
    pub gate_sources: usize,
    pub washout_samples: usize,
    pub nfl_table: Vec<u8>,
    pub nfl_probe: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            link_samples: 101,
            retrieval_sources: 10,
            hull_sources: 5,
            hull_samples: 500,
            mapping_trials: 50,
            gate_sources: 200,
            washout_samples: 101,
            nfl_table: vec![0, 1, 2, 3],
            nfl_probe: 2,
        }
    }
}

impl FigureConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        require(self.link_samples >= 2, "figures.link_samples must be >= 2")?;
        require(self.retrieval_sources >= 2, "figures.retrieval_sources must be >= 2")?;
        require(self.hull_sources >= 2, "figures.hull_sources must be >= 2")?;
        require(self.mapping_trials >= 1, "figures.mapping_trials must be >= 1")?;
        require(self.gate_sources >= 1, "figures.gate_sources must be >= 1")?;
        require(self.washout_samples >= 2, "figures.washout_samples must be >= 2")?;
        require(
            (2..=6).contains(&self.nfl_table.len()),
            "figures.nfl_table must have 2..=6 entries",
        )?;
        require(
            self.nfl_probe >= 1 && self.nfl_probe < self.nfl_table.len(),
            "figures.nfl_probe must be a non-zero point of the table",
        )
    }
}

/// Figures are drawn in the plane.
const DIM: usize = 2;
const SPREAD: f64 = 1.0;

pub fn figure_data(id: FigureId, cfg: &FigureConfig, master: u64) -> Result<Vec<Table>, LabError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id.stream());
    match id {
        FigureId::Links => links(cfg, &mut rng),
        FigureId::MappingHull => mapping_hull(cfg, &mut rng),
        FigureId::MappingGain => mapping_gain(cfg, &mut rng),
        FigureId::GatePartition => gate_partition(cfg, &mut rng),
        FigureId::Alignment => alignment_bars(cfg),
    }
}

fn origin() -> Vec<f64> {
    vec![0.0; DIM]
}

fn links(cfg: &FigureConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Table>, LabError> {
    let sphere = FamilySpec::new(FamilyKind::ShiftedSphere, DIM, SPREAD, 0);
    let deceptive = FamilySpec::new(FamilyKind::DeceptiveShift, DIM, SPREAD, 0);
    let dist = SimilarityMetric::neg_param_distance();
    let rbf = SimilarityMetric::rbf(SPREAD)?;
    let shapes = [
        ("sphere_neg_distance", family_link(&sphere, &dist)),
        ("sphere_rbf", family_link(&sphere, &rbf)),
        ("deceptive_assumed", family_link(&deceptive, &dist)),
    ];
    let mut curves = Table::new("fig2_links", &["shape", "s", "u"]);
    for (name, status) in &shapes {
        let link = status
            .usable()
            .ok_or_else(|| LabError::InvalidConfig(format!("{name} has no link")))?;
        for (s, u) in link.sample(cfg.link_samples)? {
            curves.push(vec![(*name).into(), s.value().into(), u.value().into()]);
        }
    }

    let target = sample_in_ball(rng, &origin(), SPREAD);
    let spec = FamilySpec::new(FamilyKind::ShiftedSphere, DIM, SPREAD, rng.gen());
    let fam = make_family(&spec, cfg.retrieval_sources, &target)?;
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let sims: Vec<f64> = pool_similarities(&fam.pool, fam.target.observable(), &dist)?
        .into_iter()
        .map(|s| s.value())
        .collect();
    let us: Vec<f64> = fam
        .pool
        .entries()
        .iter()
        .map(|e| Ok(oracle.usefulness(&e.knowledge)?.value()))
        .collect::<Result<_, LabError>>()?;
    let (rs, ru) = (ranks(&sims)?, ranks(&us)?);
    let mut retrieval = Table::new(
        "fig2_retrieval",
        &["source", "similarity", "usefulness", "similarity_rank", "usefulness_rank"],
    );
    for i in 0..sims.len() {
        retrieval.push(vec![i.into(), sims[i].into(), us[i].into(), rs[i].into(), ru[i].into()]);
    }
    Ok(vec![curves, retrieval])
}

fn mapping_hull(cfg: &FigureConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Table>, LabError> {
    let target = sample_in_ball(rng, &origin(), SPREAD);
    let spec = FamilySpec::new(FamilyKind::ShiftedSphere, DIM, SPREAD, rng.gen());
    let fam = make_family_with(
        &spec,
        cfg.hull_sources,
        &target,
        SourcePlacement::Cluster {
            distance: 1.5 * SPREAD,
            radius: SPREAD,
        },
    )?;
    let metric = SimilarityMetric::neg_param_distance();
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let tobs = fam.target.observable();
    let mut t = Table::new("fig3_mapping_hull", &["kind", "index", "x0", "x1", "similarity", "usefulness"]);
    let mut row = |kind: &str, index: usize, v: &Knowledge, s: f64| -> Result<(), LabError> {
        let u = oracle.usefulness(v)?.value();
        t.push(vec![kind.into(), index.into(), v.solution[0].into(), v.solution[1].into(), s.into(), u.into()]);
        Ok(())
    };
    row("target", 0, &Knowledge::new(target.clone(), fam.target.id()), metric.maximum())?;
    let hypothesis = MappingHypothesis::new(MappingFamily::Translation);
    for (i, e) in fam.pool.entries().iter().enumerate() {
        let s = metric.measure(e.task.observable(), tobs)?.value();
        row("source", i, &e.knowledge, s)?;
        let learned = learn_mapping(&e.task, &e.knowledge, tobs, &hypothesis, &metric)?;
        let mapped = apply_mapping(&learned.descriptor, &e.knowledge, &fam.target)?;
        row("translated", i, &mapped, learned.achieved.value())?;
    }
    let k = fam.pool.len();
    for i in 0..cfg.hull_samples {
        let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let m = map_mixture(&fam.pool, &w, &fam.target, &metric)?;
        row("mixture", i, &m.knowledge, m.similarity.value())?;
    }
    let w = optimize_mixture_weights(&fam.pool, tobs, &metric, 200)?;
    let best = map_mixture(&fam.pool, &w, &fam.target, &metric)?;
    row("best_mixture", 0, &best.knowledge, best.similarity.value())?;
    Ok(vec![t])
}

fn mapping_gain(cfg: &FigureConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Table>, LabError> {
    let metric = SimilarityMetric::neg_param_distance();
    let mut t = Table::new(
        "fig4_mapping",
        &[
            "trial",
            "hypothesis",
            "similarity_before",
            "similarity_after",
            "usefulness_before",
            "usefulness_after",
            "improved",
        ],
    );
    for trial in 0..cfg.mapping_trials {
        let target = sample_in_ball(rng, &origin(), SPREAD);
        let spec = FamilySpec::new(FamilyKind::ShiftedSphere, DIM, SPREAD, rng.gen());
        let fam = make_family(&spec, 1, &target)?;
        let oracle = UsefulnessOracle::new(fam.target.clone());
        let e = &fam.pool.entries()[0];
        for (name, family) in [("identity", MappingFamily::Identity), ("translation", MappingFamily::Translation)] {
            let learned = learn_mapping(
                &e.task,
                &e.knowledge,
                fam.target.observable(),
                &MappingHypothesis::new(family),
                &metric,
            )?;
            let mapped = apply_mapping(&learned.descriptor, &e.knowledge, &fam.target)?;
            let before = oracle.usefulness(&e.knowledge)?.value();
            let after = oracle.usefulness(&mapped)?.value();
            t.push(vec![
                trial.into(),
                name.into(),
                learned.before.value().into(),
                learned.achieved.value().into(),
                before.into(),
                after.into(),
                (after > before).into(),
            ]);
        }
    }
    Ok(vec![t])
}

fn gate_partition(cfg: &FigureConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Table>, LabError> {
    let metric = SimilarityMetric::neg_param_distance();
    let target = sample_in_ball(rng, &origin(), SPREAD);
    let spec = FamilySpec::new(FamilyKind::ShiftedSphere, DIM, SPREAD, rng.gen());
    let fam = make_family(&spec, cfg.gate_sources, &target)?;
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let x = sample_in_ball(rng, &target, SPREAD);
    let incumbent = Knowledge::new(x.clone(), fam.target.id());
    let state = crate::kernel::TargetState {
        time: 0,
        incumbent_usefulness: oracle.usefulness_of(&x)?,
        incumbent: incumbent.clone(),
    };
    let link = fam
        .link
        .usable()
        .ok_or_else(|| LabError::InvalidConfig("sphere family has no link".into()))?;
    let threshold = calibrate_threshold(&state, link)?;
    let part = classify_pool(&fam.pool, fam.target.observable(), &metric, &EvaluationGate::explicit(threshold))?;
    let sims = pool_similarities(&fam.pool, fam.target.observable(), &metric)?;
    let mut scatter = Table::new("fig5_gate", &["similarity", "usefulness", "accepted"]);
    for (i, (e, s)) in fam.pool.entries().iter().zip(&sims).enumerate() {
        let u = oracle.usefulness(&e.knowledge)?.value();
        scatter.push(vec![s.value().into(), u.into(), part.accepted.contains(&i).into()]);
    }
    let mut summary = Table::new("fig5_threshold", &["threshold", "incumbent_usefulness"]);
    summary.push(vec![threshold.value().into(), state.incumbent_usefulness.value().into()]);

    // two-component mixture of the most similar source with the incumbent,
    // whose observable is the target's own under a perfect incumbent model
    let best = (0..sims.len())
        .max_by(|&a, &b| sims[a].value().total_cmp(&sims[b].value()))
        .unwrap();
    let source_obs = fam.pool.entries()[best].task.observable();
    let incumbent_obs = ObservableProperty::ParamVector(threshold_point(&target, threshold.value()));
    let mut washout = Table::new("fig5_washout", &["weight", "similarity"]);
    for i in 0..cfg.washout_samples {
        let w = i as f64 / (cfg.washout_samples - 1) as f64;
        let obs = mixture_observable(&[source_obs, &incumbent_obs], &[w, 1.0 - w])?;
        washout.push(vec![w.into(), metric.measure(&obs, fam.target.observable())?.value().into()]);
    }
    Ok(vec![scatter, summary, washout])
}

/// A parameter at similarity `s` from `target` along the first axis.
fn threshold_point(target: &[f64], s: f64) -> Vec<f64> {
    let mut p = target.to_vec();
    p[0] -= s;
    p
}

fn alignment_bars(cfg: &FigureConfig) -> Result<Vec<Table>, LabError> {
    let n = cfg.nfl_table.len();
    let fam = make_finite_family(n, &cfg.nfl_table, FiniteDistribution::Uniform)?;
    let distributions = [
        ("uniform", fam.clone()),
        ("aligned", concentrated_distribution(&fam, cfg.nfl_probe, 0)?),
        ("misaligned", concentrated_distribution(&fam, 0, cfg.nfl_probe)?),
    ];
    let mut t = Table::new("fig6_alignment", &["distribution", "optimizer", "horizon", "performance"]);
    for (label, family) in &distributions {
        for opt in nfl_optimizers(cfg.nfl_probe) {
            for h in 1..=n {
                let rec = alignment(&opt, family, h, SuccessPredicate::FoundMinimum)?;
                t.push(vec![(*label).into(), opt.id.as_str().into(), h.into(), rec.dot.into()]);
            }
        }
    }
    Ok(vec![t])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_figure_has_data() {
        for id in FigureId::ALL {
            let tables = figure_data(id, &FigureConfig::default(), 3).unwrap();
            assert!(!tables.is_empty());
            for t in tables {
                assert!(!t.rows.is_empty(), "{}", t.name);
                assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
            }
            assert_eq!(id.name().parse::<FigureId>().unwrap(), id);
        }
        assert!("fig7".parse::<FigureId>().is_err());
    }

    #[test]
    fn gate_scatter_agrees_with_incumbent() {
        let tables = figure_data(FigureId::GatePartition, &FigureConfig::default(), 9).unwrap();
        let u_tau = match tables[1].rows[0][1] {
            Cell::Float(u) => u,
            _ => unreachable!(),
        };
        for r in &tables[0].rows {
            let (Cell::Float(u), Cell::Int(acc)) = (&r[1], &r[2]) else { unreachable!() };
            assert_eq!(*u > u_tau, *acc == 1);
        }
        assert_eq!(tables[2].rows.len(), FigureConfig::default().washout_samples);
    }

    #[test]
    fn links_are_monotone() {
        let t = &figure_data(FigureId::Links, &FigureConfig::default(), 1).unwrap()[0];
        for w in t.rows.windows(2) {
            if w[0][0] == w[1][0] {
                let (Cell::Float(a), Cell::Float(b)) = (&w[0][2], &w[1][2]) else { unreachable!() };
                assert!(b > a);
            }
        }
    }
}
