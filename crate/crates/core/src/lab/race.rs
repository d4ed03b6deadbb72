//! Paired races: the evolver alone against the evolver with periodic
//! transfer attempts, same seed, counting evaluations until a target
//! precision is reached.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolver::{EvolverConfig, Evolver, RunTrace};
use crate::kernel::{Knowledge, SimilarityScore, TargetState, Usefulness};
use crate::similarity::SimilarityMetric;
use crate::tasks::{make_family_with, sample_in_ball, Family, FamilyKind, FamilySpec, SourcePlacement};
use crate::transfer::evaluation::{calibrate_threshold, EvaluationGate};
use crate::transfer::mapping::{MappingFamily, MappingHypothesis};
use crate::transfer::method::TransferMethod;
use crate::transfer::{execute_method, GateRule, TransferContext};

use super::stats::median;
use super::{require, trial_seed, ExperimentId, ExperimentReport, LabError, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mu: usize,
    pub lambda: usize,
    pub sigma0: f64,
    pub self_adaptive: bool,
}

impl SolverConfig {
    pub fn evolver(&self, budget: usize, seed: u64) -> EvolverConfig {
        EvolverConfig {
            mu: self.mu,
            lambda: self.lambda,
            sigma0: self.sigma0,
            budget,
            seed,
            self_adaptive: self.self_adaptive,
        }
    }

    fn from_evolver(c: EvolverConfig) -> Self {
        Self {
            mu: c.mu,
            lambda: c.lambda,
            sigma0: c.sigma0,
            self_adaptive: c.self_adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaceConfig {
    pub dimension: usize,
    pub spread: f64,
    pub races: usize,
    pub budget: usize,
    pub precision: f64,
    /// Generations between transfer attempts.
    pub transfer_interval: usize,
    pub sources: usize,
    /// Near pool: cluster distance and radius, in units of spread.
    pub near_distance: f64,
    pub near_radius: f64,
    /// Distant pool: cluster distance and radius, in units of spread.
    pub distant_distance: f64,
    pub distant_radius: f64,
    pub method: String,
    pub unsafe_method: String,
    pub mapping: MappingFamily,
    pub min_win_rate: f64,
    /// The strong solver attempts transfer only once its best objective is
    /// at most this, i.e. from a near-converged state.
    pub strong_transfer_start: f64,
    pub weak: SolverConfig,
    pub strong: SolverConfig,
}

impl Default for RaceConfig {
    fn default() -> Self {
        Self {
            dimension: 5,
            spread: 1.0,
            races: 100,
            budget: 20_000,
            precision: 1e-6,
            transfer_interval: 1,
            sources: 5,
            near_distance: 0.01,
            near_radius: 0.005,
            distant_distance: 4.0,
            distant_radius: 0.5,
            method: "r>m>e".into(),
            unsafe_method: "r".into(),
            mapping: MappingFamily::Translation,
            min_win_rate: 0.95,
            strong_transfer_start: 1e-2,
            weak: SolverConfig::from_evolver(EvolverConfig::eo_b(1, 0)),
            strong: SolverConfig::from_evolver(EvolverConfig::eo_a(1, 0)),
        }
    }
}

impl RaceConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        require(self.dimension >= 1, "race.dimension must be >= 1")?;
        require(self.spread > 0.0, "race.spread must be positive")?;
        require(self.races >= 1, "race.races must be >= 1")?;
        require(self.transfer_interval >= 1, "race.transfer_interval must be >= 1")?;
        require(self.sources >= 1, "race.sources must be >= 1")?;
        require(self.precision > 0.0, "race.precision must be positive")?;
        require(self.strong_transfer_start > 0.0, "race.strong_transfer_start must be positive")?;
        require(self.near_distance > self.near_radius, "race.near_distance must exceed near_radius")?;
        require(
            self.distant_distance > self.distant_radius,
            "race.distant_distance must exceed distant_radius",
        )?;
        self.method.parse::<TransferMethod>()?;
        self.unsafe_method.parse::<TransferMethod>()?;
        self.weak.evolver(self.budget, 0).validate()?;
        self.strong.evolver(self.budget, 0).validate()?;
        Ok(())
    }
}

/// When the engine's gate may fire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RaceGate {
    /// Recalibrate from the family link at every attempt.
    Calibrated,
    /// Fixed threshold.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRun {
    pub trace: RunTrace,
    pub transfers: usize,
}

/// Run the evolver on the family target, attempting `method` every
/// `interval` generations once the best objective is at most `start`, and
/// injecting whatever the engine transfers. Stops at the budget or once
/// `precision` is reached.
#[allow(clippy::too_many_arguments)]
pub fn run_with_transfer(
    family: &Family,
    solver: &EvolverConfig,
    method: Option<&TransferMethod>,
    mapping: MappingFamily,
    gate: RaceGate,
    interval: usize,
    start: f64,
    precision: f64,
) -> Result<TransferRun, LabError> {
    let mut ev = Evolver::new(family.target.clone(), solver.clone())?;
    let metric = SimilarityMetric::neg_param_distance();
    let mut transfers = 0;
    let mut generation = 0usize;
    let mut started = false;
    loop {
        if ev.best().1 <= precision {
            break;
        }
        if !started && ev.best().1 <= start {
            started = true;
            generation = 0;
        }
        if let (Some(method), true) = (method, started) {
            if generation % interval == 0 && ev.remaining() > 0 {
                let (x, f) = ev.best();
                let state = TargetState {
                    time: ev.evaluations() as u64,
                    incumbent: Knowledge::new(x.to_vec(), family.target.id()),
                    incumbent_usefulness: Usefulness::new(-f)?,
                };
                let threshold = match gate {
                    RaceGate::Fixed(t) => SimilarityScore::new(t)?,
                    RaceGate::Calibrated => {
                        let link = family
                            .link
                            .usable()
                            .ok_or_else(|| LabError::InvalidConfig("race family has no link".into()))?;
                        calibrate_threshold(&state, link)?
                    }
                };
                let ctx = TransferContext {
                    target: family.target.clone(),
                    metric,
                    gate: GateRule::Similarity(EvaluationGate::explicit(threshold)),
                    hypothesis: MappingHypothesis::new(mapping),
                };
                let exec = execute_method(method, &family.pool, &state, &ctx, solver.seed)?;
                if exec.record.transferred && ev.inject(&exec.knowledge) {
                    transfers += 1;
                    if ev.best().1 <= precision {
                        break;
                    }
                }
            }
        }
        if !ev.step() {
            break;
        }
        generation += 1;
    }
    Ok(TransferRun {
        trace: ev.finish(),
        transfers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    WeakNearGated,
    WeakNearGateClosed,
    StrongDistantUnsafe,
    StrongDistantGated,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::WeakNearGated,
        Scenario::WeakNearGateClosed,
        Scenario::StrongDistantUnsafe,
        Scenario::StrongDistantGated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::WeakNearGated => "weak_near_gated",
            Scenario::WeakNearGateClosed => "weak_near_gate_closed",
            Scenario::StrongDistantUnsafe => "strong_distant_unsafe",
            Scenario::StrongDistantGated => "strong_distant_gated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceRow {
    pub race: usize,
    pub scenario: Scenario,
    pub baseline_evaluations: usize,
    pub transfer_evaluations: usize,
    pub transfers: usize,
    pub identical_trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceOutcome {
    pub report: ExperimentReport,
    pub rows: Vec<RaceRow>,
    /// Baseline and transfer traces of race 0 in the weak gated scenario.
    pub example: (RunTrace, RunTrace),
}

fn censored(trace: &RunTrace, precision: f64, budget: usize) -> usize {
    trace.evaluations_to(precision).unwrap_or(budget + 1)
}

pub fn race(cfg: &RaceConfig, master: u64) -> Result<RaceOutcome, LabError> {
    cfg.validate()?;
    let id = ExperimentId::Race;
    let method: TransferMethod = cfg.method.parse()?;
    let unsafe_method: TransferMethod = cfg.unsafe_method.parse()?;
    let closed = SimilarityMetric::neg_param_distance().maximum() + 1.0;

    let per_race = (0..cfg.races)
        .into_par_iter()
        .map(|i| -> Result<(Vec<RaceRow>, Option<(RunTrace, RunTrace)>), LabError> {
            let seed = trial_seed(master, id, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = sample_in_ball(&mut rng, &vec![0.0; cfg.dimension], cfg.spread);
            let spec = FamilySpec::new(FamilyKind::ShiftedSphere, cfg.dimension, cfg.spread, rng.next_u64());
            let near = make_family_with(
                &spec,
                cfg.sources,
                &target,
                SourcePlacement::Cluster {
                    distance: cfg.near_distance * cfg.spread,
                    radius: cfg.near_radius * cfg.spread,
                },
            )?;
            let distant = make_family_with(
                &spec,
                cfg.sources,
                &target,
                SourcePlacement::Cluster {
                    distance: cfg.distant_distance * cfg.spread,
                    radius: cfg.distant_radius * cfg.spread,
                },
            )?;
            let weak = cfg.weak.evolver(cfg.budget, seed);
            let strong = cfg.strong.evolver(cfg.budget, seed);
            let go = |fam: &Family, solver: &EvolverConfig, m: Option<&TransferMethod>, gate, start| {
                run_with_transfer(fam, solver, m, cfg.mapping, gate, cfg.transfer_interval, start, cfg.precision)
            };
            let any = f64::INFINITY;
            let converged = cfg.strong_transfer_start;
            let weak_base = go(&near, &weak, None, RaceGate::Calibrated, any)?;
            let strong_base = go(&distant, &strong, None, RaceGate::Calibrated, any)?;
            let runs = [
                (
                    Scenario::WeakNearGated,
                    &weak_base,
                    go(&near, &weak, Some(&method), RaceGate::Calibrated, any)?,
                ),
                (
                    Scenario::WeakNearGateClosed,
                    &weak_base,
                    go(&near, &weak, Some(&method), RaceGate::Fixed(closed), any)?,
                ),
                (
                    Scenario::StrongDistantUnsafe,
                    &strong_base,
                    go(&distant, &strong, Some(&unsafe_method), RaceGate::Calibrated, converged)?,
                ),
                (
                    Scenario::StrongDistantGated,
                    &strong_base,
                    go(&distant, &strong, Some(&method), RaceGate::Calibrated, converged)?,
                ),
            ];
            let example = (i == 0).then(|| (weak_base.trace.clone(), runs[0].2.trace.clone()));
            let rows = runs
                .into_iter()
                .map(|(scenario, base, run)| RaceRow {
                    race: i,
                    scenario,
                    baseline_evaluations: censored(&base.trace, cfg.precision, cfg.budget),
                    transfer_evaluations: censored(&run.trace, cfg.precision, cfg.budget),
                    transfers: run.transfers,
                    identical_trace: base.trace == run.trace,
                })
                .collect();
            Ok((rows, example))
        })
        .collect::<Result<Vec<_>, LabError>>()?;

    let mut example = None;
    let mut rows = Vec::new();
    for (r, ex) in per_race {
        rows.extend(r);
        if ex.is_some() {
            example = ex;
        }
    }
    let of = |s: Scenario| rows.iter().filter(move |r| r.scenario == s);
    let n = cfg.races as f64;

    let mut report = ExperimentReport::new(id, master, cfg.races, 0.0);
    let wins = of(Scenario::WeakNearGated)
        .filter(|r| r.transfer_evaluations < r.baseline_evaluations)
        .count();
    report.check("weak_near_win_rate", wins as f64 / n, Relation::Ge, cfg.min_win_rate);
    let identical = of(Scenario::WeakNearGateClosed).filter(|r| r.identical_trace).count();
    report.check("gate_closed_identical_traces", identical as f64, Relation::Eq, n);
    let unsafe_rows: Vec<&RaceRow> = of(Scenario::StrongDistantUnsafe).collect();
    let med = |f: fn(&RaceRow) -> usize, rs: &[&RaceRow]| median(&rs.iter().map(|r| f(r) as f64).collect::<Vec<_>>());
    let unsafe_transfer = med(|r| r.transfer_evaluations, &unsafe_rows);
    let unsafe_base = med(|r| r.baseline_evaluations, &unsafe_rows);
    report.check("strong_distant_unsafe_median", unsafe_transfer, Relation::Gt, unsafe_base);
    let losses = unsafe_rows
        .iter()
        .filter(|r| r.transfer_evaluations > r.baseline_evaluations)
        .count();
    report.stat("strong_distant_unsafe_loss_rate", losses as f64 / n);
    let gated: Vec<&RaceRow> = of(Scenario::StrongDistantGated).collect();
    let no_harm = gated
        .iter()
        .filter(|r| r.transfer_evaluations <= r.baseline_evaluations)
        .count();
    report.stat("strong_distant_gated_no_harm_rate", no_harm as f64 / n);
    report.stat("strong_distant_gated_median", med(|r| r.transfer_evaluations, &gated));
    report.stat("strong_baseline_median", unsafe_base);
    report.stat(
        "weak_baseline_median",
        med(|r| r.baseline_evaluations, &of(Scenario::WeakNearGated).collect::<Vec<_>>()),
    );
    report.stat(
        "weak_transfer_median",
        med(|r| r.transfer_evaluations, &of(Scenario::WeakNearGated).collect::<Vec<_>>()),
    );
    report.note(format!(
        "runs that never reach {:e} count as budget + 1 = {} evaluations",
        cfg.precision,
        cfg.budget + 1
    ));
    Ok(RaceOutcome {
        report,
        rows,
        example: example.expect("race 0 always runs"),
    })
}
