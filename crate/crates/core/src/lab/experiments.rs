//! The statistical experiments behind `verify`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{check_monotone_premises, Knowledge, SimilarityScore, TargetState, Usefulness};
use crate::nfl::{alignment, concentrated_distribution, DeterministicOptimizer, Policy, SuccessPredicate};
use crate::similarity::{squared_distance, SimilarityMetric};
use crate::tasks::{
    make_family, make_family_with, make_finite_family, sample_in_ball, sample_on_sphere, Family, FamilyKind,
    FamilySpec, FiniteDistribution, SourcePlacement, UsefulnessOracle,
};
use crate::transfer::evaluation::{calibrate_threshold, classify_pool, EvaluationGate};
use crate::transfer::mapping::{learn_mapping, apply_mapping, MappingFamily, MappingHypothesis, MappingStatus};
use crate::transfer::method::{enumerate_methods, Stage, TransferMethod};
use crate::transfer::retrieval::pool_similarities;
use crate::transfer::{execute_method, GateRule, TransferContext};

use super::stats::{binomial_acceptance, spearman};
use super::{require, trial_seed, ExperimentId, ExperimentReport, LabError, Relation};

/// Slack for "nonnegative" gains.
pub const GAIN_TOLERANCE: f64 = 1e-12;
/// Slack for the infimum comparison.
pub const INFIMUM_TOLERANCE: f64 = 1e-9;
/// Slack for the decomposition identity.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-9;

fn par_trials<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T, LabError> + Sync + Send,
) -> Result<Vec<T>, LabError> {
    (0..n).into_par_iter().map(f).collect()
}

fn target_param(rng: &mut ChaCha8Rng, d: usize, spread: f64) -> Vec<f64> {
    sample_in_ball(rng, &vec![0.0; d], spread)
}

fn state_for(oracle: &UsefulnessOracle, x: Vec<f64>) -> Result<TargetState, LabError> {
    let u = oracle.usefulness_of(&x)?;
    Ok(TargetState {
        time: 0,
        incumbent: Knowledge::new(x, oracle.target().id()),
        incumbent_usefulness: u,
    })
}

fn pool_usefulness(oracle: &UsefulnessOracle, family: &Family) -> Result<Vec<Usefulness>, LabError> {
    family
        .pool
        .entries()
        .iter()
        .map(|e| Ok(oracle.usefulness(&e.knowledge)?))
        .collect()
}

fn calibrated_gate(family: &Family, state: &TargetState) -> Result<EvaluationGate, LabError> {
    let link = family
        .link
        .usable()
        .ok_or_else(|| LabError::InvalidConfig("family has no link to calibrate against".into()))?;
    Ok(EvaluationGate::explicit(calibrate_threshold(state, link)?))
}

fn validate_family(d: usize, spread: f64) -> Result<(), LabError> {
    require(d >= 1, "dimension must be >= 1")?;
    require(spread > 0.0 && spread.is_finite(), "spread must be positive")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankInferenceConfig {
    pub dimension: usize,
    pub spread: f64,
    pub sources: usize,
    pub trials: usize,
    pub deceptive_trials: usize,
}

impl Default for RankInferenceConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            spread: 1.0,
            sources: 100,
            trials: 50,
            deceptive_trials: 50,
        }
    }
}

impl RankInferenceConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        validate_family(self.dimension, self.spread)?;
        require(self.sources >= 2, "rank_inference.sources must be >= 2")?;
        require(self.trials >= 1, "rank_inference.trials must be >= 1")
    }
}

/// Spearman correlation between similarity and brute-force usefulness
/// across a pool, plus whether the pool satisfies the monotone premises.
fn rank_trial(kind: FamilyKind, cfg: &RankInferenceConfig, seed: u64) -> Result<(f64, bool), LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = target_param(&mut rng, cfg.dimension, cfg.spread);
    let spec = FamilySpec::new(kind, cfg.dimension, cfg.spread, rng.next_u64());
    let fam = make_family(&spec, cfg.sources, &target)?;
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let sims = pool_similarities(&fam.pool, fam.target.observable(), &SimilarityMetric::neg_param_distance())?;
    let us = pool_usefulness(&oracle, &fam)?;
    let s: Vec<f64> = sims.iter().map(|x| x.value()).collect();
    let u: Vec<f64> = us.iter().map(|x| x.value()).collect();
    let pairs: Vec<(SimilarityScore, Usefulness)> = sims.into_iter().zip(us).collect();
    let premise = check_monotone_premises(&pairs)?.holds();
    Ok((spearman(&s, &u)?, premise))
}

pub fn rank_inference(cfg: &RankInferenceConfig, master: u64) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let id = ExperimentId::RankInference;
    let sphere = par_trials(cfg.trials, |i| {
        rank_trial(FamilyKind::ShiftedSphere, cfg, trial_seed(master, id, i))
    })?;
    let deceptive = par_trials(cfg.deceptive_trials, |i| {
        rank_trial(FamilyKind::DeceptiveShift, cfg, trial_seed(master, id, cfg.trials + i))
    })?;
    let mut r = ExperimentReport::new(id, master, cfg.trials + cfg.deceptive_trials, 0.0);
    let min_sphere = sphere.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    r.check("sphere_min_spearman", min_sphere, Relation::Eq, 1.0);
    r.check(
        "sphere_premise_violations",
        sphere.iter().filter(|t| !t.1).count() as f64,
        Relation::Eq,
        0.0,
    );
    if cfg.deceptive_trials > 0 {
        let below = deceptive.iter().filter(|t| t.0 < 1.0).count();
        r.check("deceptive_trials_below_one", below as f64, Relation::Ge, 1.0);
        r.stat(
            "deceptive_min_spearman",
            deceptive.iter().map(|t| t.0).fold(f64::INFINITY, f64::min),
        );
        r.stat(
            "deceptive_premise_violations",
            deceptive.iter().filter(|t| !t.1).count() as f64,
        );
    }
    r.stat("sources", cfg.sources as f64);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingGainConfig {
    pub dimension: usize,
    pub spread: f64,
    pub trials: usize,
    pub ellipsoid_trials: usize,
    pub ellipsoid_min_rate: f64,
}

impl Default for MappingGainConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            spread: 1.0,
            trials: 1000,
            ellipsoid_trials: 200,
            ellipsoid_min_rate: 0.99,
        }
    }
}

impl MappingGainConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        validate_family(self.dimension, self.spread)?;
        require(self.trials >= 1, "mapping_gain.trials must be >= 1")?;
        require(
            (0.0..=1.0).contains(&self.ellipsoid_min_rate),
            "mapping_gain.ellipsoid_min_rate must lie in [0, 1]",
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct MappingOutcome {
    realizable: bool,
    improved: bool,
}

fn mapping_trial(
    kind: FamilyKind,
    family: MappingFamily,
    metric: &SimilarityMetric,
    cfg: &MappingGainConfig,
    seed: u64,
) -> Result<MappingOutcome, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = target_param(&mut rng, cfg.dimension, cfg.spread);
    let spec = FamilySpec::new(kind, cfg.dimension, cfg.spread, rng.next_u64());
    let fam = make_family(&spec, 1, &target)?;
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let e = &fam.pool.entries()[0];
    let learned = learn_mapping(
        &e.task,
        &e.knowledge,
        fam.target.observable(),
        &MappingHypothesis::new(family),
        metric,
    )?;
    if learned.status == MappingStatus::NotRealizable {
        return Ok(MappingOutcome {
            realizable: false,
            improved: false,
        });
    }
    let mapped = apply_mapping(&learned.descriptor, &e.knowledge, &fam.target)?;
    Ok(MappingOutcome {
        realizable: true,
        improved: oracle.usefulness(&mapped)? > oracle.usefulness(&e.knowledge)?,
    })
}

fn rate(outcomes: &[MappingOutcome]) -> (usize, f64) {
    let realizable: Vec<_> = outcomes.iter().filter(|o| o.realizable).collect();
    let improved = realizable.iter().filter(|o| o.improved).count();
    let rate = if realizable.is_empty() {
        0.0
    } else {
        improved as f64 / realizable.len() as f64
    };
    (realizable.len(), rate)
}

pub fn mapping_gain(cfg: &MappingGainConfig, master: u64) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let id = ExperimentId::MappingGain;
    let param = SimilarityMetric::neg_param_distance();
    let translation = par_trials(cfg.trials, |i| {
        mapping_trial(FamilyKind::ShiftedSphere, MappingFamily::Translation, &param, cfg, trial_seed(master, id, i))
    })?;
    let identity = par_trials(cfg.trials, |i| {
        mapping_trial(FamilyKind::ShiftedSphere, MappingFamily::Identity, &param, cfg, trial_seed(master, id, i))
    })?;
    let w2 = SimilarityMetric::gaussian_w2();
    let affine = par_trials(cfg.ellipsoid_trials, |i| {
        mapping_trial(
            FamilyKind::ShiftedRotatedEllipsoid,
            MappingFamily::Affine,
            &w2,
            cfg,
            trial_seed(master, id, cfg.trials + i),
        )
    })?;

    let mut r = ExperimentReport::new(id, master, cfg.trials, 0.0);
    let (n, t_rate) = rate(&translation);
    r.check("translation_realizable_trials", n as f64, Relation::Ge, 1.0);
    r.check("translation_improvement_rate", t_rate, Relation::Eq, 1.0);
    r.stat("translation_excluded", (cfg.trials - n) as f64);
    let (n_id, _) = rate(&identity);
    r.check("identity_realizable_trials", n_id as f64, Relation::Eq, 0.0);
    r.note("identity-only hypothesis set: every trial is not realizable, so the improvement claim is vacuous there");
    if cfg.ellipsoid_trials > 0 {
        let (n_a, a_rate) = rate(&affine);
        r.check("affine_ellipsoid_improvement_rate", a_rate, Relation::Ge, cfg.ellipsoid_min_rate);
        r.stat("affine_ellipsoid_realizable", n_a as f64);
        r.note("affine mappings run on population observables under the Gaussian W2 metric");
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    pub dimension: usize,
    pub spread: f64,
    pub sources: usize,
    pub trials: usize,
    pub deceptive_trials: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            spread: 1.0,
            sources: 200,
            trials: 50,
            deceptive_trials: 50,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        validate_family(self.dimension, self.spread)?;
        require(self.sources >= 1, "threshold.sources must be >= 1")?;
        require(self.trials >= 1, "threshold.trials must be >= 1")
    }
}

/// Confusion counts `[accepted & useful, accepted & useless, rejected &
/// useful, rejected & useless]`.
fn threshold_trial(kind: FamilyKind, cfg: &ThresholdConfig, seed: u64) -> Result<[usize; 4], LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = target_param(&mut rng, cfg.dimension, cfg.spread);
    let spec = FamilySpec::new(kind, cfg.dimension, cfg.spread, rng.next_u64());
    let fam = make_family(&spec, cfg.sources, &target)?;
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let state = state_for(&oracle, sample_in_ball(&mut rng, &target, cfg.spread))?;
    let gate = calibrated_gate(&fam, &state)?;
    let part = classify_pool(&fam.pool, fam.target.observable(), &SimilarityMetric::neg_param_distance(), &gate)?;
    let us = pool_usefulness(&oracle, &fam)?;
    let mut counts = [0; 4];
    for (i, u) in us.iter().enumerate() {
        let useful = *u > state.incumbent_usefulness;
        let accepted = part.accepted.contains(&i);
        counts[match (accepted, useful) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }] += 1;
    }
    Ok(counts)
}

fn sum_counts(rows: &[[usize; 4]]) -> [usize; 4] {
    rows.iter().fold([0; 4], |mut acc, r| {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
        acc
    })
}

pub fn threshold(cfg: &ThresholdConfig, master: u64) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let id = ExperimentId::Threshold;
    let sphere = par_trials(cfg.trials, |i| threshold_trial(FamilyKind::ShiftedSphere, cfg, trial_seed(master, id, i)))?;
    let deceptive = par_trials(cfg.deceptive_trials, |i| {
        threshold_trial(FamilyKind::DeceptiveShift, cfg, trial_seed(master, id, cfg.trials + i))
    })?;
    let mut r = ExperimentReport::new(id, master, cfg.trials + cfg.deceptive_trials, 0.0);
    let c = sum_counts(&sphere);
    r.check("sphere_false_accepts", c[1] as f64, Relation::Eq, 0.0);
    r.check("sphere_false_rejects", c[2] as f64, Relation::Eq, 0.0);
    r.stat("sphere_true_accepts", c[0] as f64);
    r.stat("sphere_true_rejects", c[3] as f64);
    if cfg.deceptive_trials > 0 {
        let d = sum_counts(&deceptive);
        r.check("deceptive_misclassifications", (d[1] + d[2]) as f64, Relation::Ge, 1.0);
        r.stat("deceptive_false_accepts", d[1] as f64);
        r.stat("deceptive_false_rejects", d[2] as f64);
        r.note("deceptive pools are gated with the link a practitioner would assume without the decoy basin");
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSafetyConfig {
    pub dimension: usize,
    pub spread: f64,
    pub sources: usize,
    pub trials: usize,
    /// Adversarial cluster centre distance, in units of spread.
    pub cluster_distance: f64,
    /// Adversarial cluster radius, in units of spread.
    pub cluster_radius: f64,
}

impl Default for GateSafetyConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            spread: 1.0,
            sources: 8,
            trials: 10_000,
            cluster_distance: 3.0,
            cluster_radius: 0.5,
        }
    }
}

impl GateSafetyConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        validate_family(self.dimension, self.spread)?;
        require(self.sources >= 2, "gate_safety.sources must be >= 2 (mixture mappings need two)")?;
        require(self.trials >= 4, "gate_safety.trials must be >= 4 (one per trial scheme)")?;
        require(
            self.cluster_distance - self.cluster_radius >= 2.0,
            "gate_safety adversarial sources must lie beyond 2x spread",
        )
    }
}

struct GateTrial {
    adversarial: bool,
    /// Per method, in enumeration order: (gain, infimum prediction).
    rows: Vec<(f64, f64)>,
}

fn gate_trial(cfg: &GateSafetyConfig, methods: &[TransferMethod], index: usize, seed: u64) -> Result<GateTrial, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = target_param(&mut rng, cfg.dimension, cfg.spread);
    let adversarial = index % 4 >= 2;
    let family = if index % 2 == 0 {
        MappingFamily::Translation
    } else {
        MappingFamily::MixtureWeights
    };
    let placement = if adversarial {
        SourcePlacement::Cluster {
            distance: cfg.cluster_distance * cfg.spread,
            radius: cfg.cluster_radius * cfg.spread,
        }
    } else {
        SourcePlacement::Ball
    };
    let spec = FamilySpec::new(FamilyKind::ShiftedSphere, cfg.dimension, cfg.spread, rng.next_u64());
    let fam = make_family_with(&spec, cfg.sources, &target, placement)?;
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let state = state_for(&oracle, sample_in_ball(&mut rng, &target, cfg.spread))?;
    let gate = calibrated_gate(&fam, &state)?;
    let ctx = TransferContext {
        target: fam.target.clone(),
        metric: SimilarityMetric::neg_param_distance(),
        gate: GateRule::Similarity(gate),
        hypothesis: MappingHypothesis::new(family),
    };
    let runs = methods
        .iter()
        .map(|m| execute_method(m, &fam.pool, &state, &ctx, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let u_min = pool_usefulness(&oracle, &fam)?
        .into_iter()
        .min()
        .expect("pool is nonempty")
        .value();
    let u_tau = state.incumbent_usefulness.value();
    let delta_u = runs
        .iter()
        .filter_map(|e| e.delta_u)
        .fold(f64::INFINITY, f64::min);
    let rows = methods
        .iter()
        .zip(&runs)
        .map(|(m, e)| (e.record.delta, m.infimum_class().value(u_min, u_tau, delta_u)))
        .collect();
    if delta_u < 0.0 {
        return Err(LabError::InvalidConfig(format!("trial {index}: measured delta_u {delta_u} < 0")));
    }
    Ok(GateTrial { adversarial, rows })
}

pub fn gate_safety(cfg: &GateSafetyConfig, master: u64) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let id = ExperimentId::GateSafety;
    let methods = enumerate_methods();
    let trials = par_trials(cfg.trials, |i| gate_trial(cfg, &methods, i, trial_seed(master, id, i)))?;
    let mut r = ExperimentReport::new(id, master, cfg.trials, GAIN_TOLERANCE);
    for (j, m) in methods.iter().enumerate() {
        let min_gain = trials.iter().map(|t| t.rows[j].0).fold(f64::INFINITY, f64::min);
        if m.contains(Stage::Evaluation) {
            r.check(format!("min_gain[{m}]"), min_gain, Relation::Ge, -GAIN_TOLERANCE);
        } else {
            let negatives = trials.iter().filter(|t| t.adversarial && t.rows[j].0 < 0.0).count();
            r.check(format!("adversarial_negative_trials[{m}]"), negatives as f64, Relation::Ge, 1.0);
            r.stat(format!("min_gain[{m}]"), min_gain);
        }
    }
    for (j, m) in methods.iter().enumerate() {
        let slack = trials
            .iter()
            .map(|t| t.rows[j].0 - t.rows[j].1)
            .fold(f64::INFINITY, f64::min);
        r.check(format!("gain_minus_infimum[{m}]"), slack, Relation::Ge, -INFIMUM_TOLERANCE);
    }
    r.stat(
        "adversarial_trials",
        trials.iter().filter(|t| t.adversarial).count() as f64,
    );
    r.note("trial schemes cycle: ball pool + translation, ball + mixture, adversarial cluster + translation, adversarial + mixture");
    r.note("delta_u per trial is the smallest mapping improvement measured across the methods that map");
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BigSourceConfig {
    pub dimension: usize,
    pub spread: f64,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub estimation_samples: usize,
    /// Incumbent distance from the target optimum, in units of spread.
    pub incumbent_distance: f64,
    pub confidence: f64,
    pub min_final_frequency: f64,
}

impl Default for BigSourceConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            spread: 1.0,
            ks: vec![1, 2, 4, 8, 16, 32],
            trials: 10_000,
            estimation_samples: 100_000,
            incumbent_distance: 0.55,
            confidence: 0.99,
            min_final_frequency: 0.99,
        }
    }
}

impl BigSourceConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        validate_family(self.dimension, self.spread)?;
        require(!self.ks.is_empty() && self.ks.iter().all(|&k| k >= 1), "big_source.ks must be nonempty and >= 1")?;
        require(self.trials >= 1, "big_source.trials must be >= 1")?;
        require(self.estimation_samples >= 1, "big_source.estimation_samples must be >= 1")?;
        require(
            self.incumbent_distance > 0.0 && self.incumbent_distance < 1.0,
            "big_source.incumbent_distance must lie in (0, 1)",
        )?;
        require(
            self.confidence > 0.0 && self.confidence < 1.0,
            "big_source.confidence must lie in (0, 1)",
        )
    }
}

/// Closed-form prediction `1 - (1 - p)^k`.
pub fn big_source_prediction(p_plus: f64, k: usize) -> f64 {
    1.0 - (1.0 - p_plus).powi(k as i32)
}

pub fn big_source(cfg: &BigSourceConfig, master: u64) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let id = ExperimentId::BigSource;
    let d = cfg.dimension;
    let r0 = cfg.incumbent_distance * cfg.spread;

    // independent estimate of P+: one source against one incumbent per draw
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master, id, usize::MAX / 2));
    let origin = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..cfg.estimation_samples {
        let theta = sample_in_ball(&mut rng, &origin, cfg.spread);
        let incumbent = sample_on_sphere(&mut rng, &origin, r0);
        if squared_distance(&theta, &origin) < squared_distance(&incumbent, &origin) {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / cfg.estimation_samples as f64;

    let method: TransferMethod = "r>e".parse()?;
    let mut r = ExperimentReport::new(id, master, cfg.trials * cfg.ks.len(), 0.0);
    r.confidence = Some(cfg.confidence);
    r.stat("p_plus_estimate", p_hat);
    r.stat("estimation_samples", cfg.estimation_samples as f64);
    for (j, &k) in cfg.ks.iter().enumerate() {
        let positive = par_trials(cfg.trials, |i| {
            let seed = trial_seed(master, id, j * cfg.trials + i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = target_param(&mut rng, d, cfg.spread);
            let spec = FamilySpec::new(FamilyKind::ShiftedSphere, d, cfg.spread, rng.next_u64());
            let fam = make_family(&spec, k, &target)?;
            let oracle = UsefulnessOracle::new(fam.target.clone());
            let state = state_for(&oracle, sample_on_sphere(&mut rng, &target, r0))?;
            let ctx = TransferContext {
                target: fam.target.clone(),
                metric: SimilarityMetric::neg_param_distance(),
                gate: GateRule::Similarity(calibrated_gate(&fam, &state)?),
                hypothesis: MappingHypothesis::new(MappingFamily::Translation),
            };
            Ok(execute_method(&method, &fam.pool, &state, &ctx, seed)?.record.delta > 0.0)
        })?
        .into_iter()
        .filter(|&p| p)
        .count();
        let predicted = big_source_prediction(p_hat, k);
        let (lo, hi) = binomial_acceptance(cfg.trials as u64, predicted, cfg.confidence);
        r.stat(format!("predicted[k={k}]"), predicted);
        r.stat(format!("frequency[k={k}]"), positive as f64 / cfg.trials as f64);
        r.check(format!("positives_at_least[k={k}]"), positive as f64, Relation::Ge, lo as f64);
        r.check(format!("positives_at_most[k={k}]"), positive as f64, Relation::Le, hi as f64);
        if j + 1 == cfg.ks.len() {
            r.check(
                format!("final_frequency[k={k}]"),
                positive as f64 / cfg.trials as f64,
                Relation::Ge,
                cfg.min_final_frequency,
            );
        }
    }
    r.note("bounds are the equal-tailed binomial acceptance region around the predicted frequency");
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcedMappingConfig {
    pub dimension: usize,
    pub spread: f64,
    pub trials: usize,
    /// Every n-th trial starts from the target optimum (0 disables).
    pub optimal_incumbent_every: usize,
    pub broken_trials: usize,
}

impl Default for ForcedMappingConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            spread: 1.0,
            trials: 1000,
            optimal_incumbent_every: 10,
            broken_trials: 100,
        }
    }
}

impl ForcedMappingConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        validate_family(self.dimension, self.spread)?;
        require(self.trials >= 1, "forced_mapping.trials must be >= 1")
    }
}

enum ForcedOutcome {
    Included { gain: f64 },
    ConditionUnmet,
    PremiseBroken,
}

fn forced_trial(kind: FamilyKind, cfg: &ForcedMappingConfig, index: usize, seed: u64) -> Result<ForcedOutcome, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = target_param(&mut rng, cfg.dimension, cfg.spread);
    let spec = FamilySpec::new(kind, cfg.dimension, cfg.spread, rng.next_u64());
    let fam = make_family(&spec, 1, &target)?;
    if fam.link.known().is_none() {
        return Ok(ForcedOutcome::PremiseBroken);
    }
    let oracle = UsefulnessOracle::new(fam.target.clone());
    let optimal = cfg.optimal_incumbent_every > 0 && index % cfg.optimal_incumbent_every == 0;
    let incumbent = if optimal {
        target.clone()
    } else {
        sample_in_ball(&mut rng, &target, cfg.spread)
    };
    let state = state_for(&oracle, incumbent)?;
    let ctx = TransferContext {
        target: fam.target.clone(),
        metric: SimilarityMetric::neg_param_distance(),
        gate: GateRule::Similarity(calibrated_gate(&fam, &state)?),
        hypothesis: MappingHypothesis::new(MappingFamily::Translation),
    };
    let exec = execute_method(&"m".parse()?, &fam.pool, &state, &ctx, seed)?;
    let u_min = pool_usefulness(&oracle, &fam)?[0].value();
    let delta_u = exec.delta_u.unwrap_or(0.0);
    if delta_u > state.incumbent_usefulness.value() - u_min {
        Ok(ForcedOutcome::Included { gain: exec.record.delta })
    } else {
        Ok(ForcedOutcome::ConditionUnmet)
    }
}

pub fn forced_mapping(cfg: &ForcedMappingConfig, master: u64) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let id = ExperimentId::ForcedMapping;
    let sphere = par_trials(cfg.trials, |i| forced_trial(FamilyKind::ShiftedSphere, cfg, i, trial_seed(master, id, i)))?;
    let broken = par_trials(cfg.broken_trials, |i| {
        forced_trial(FamilyKind::DeceptiveShift, cfg, i, trial_seed(master, id, cfg.trials + i))
    })?;
    let gains: Vec<f64> = sphere
        .iter()
        .filter_map(|o| match o {
            ForcedOutcome::Included { gain } => Some(*gain),
            _ => None,
        })
        .collect();
    let unmet = sphere.iter().filter(|o| matches!(o, ForcedOutcome::ConditionUnmet)).count();
    let broken_excluded = broken.iter().filter(|o| !matches!(o, ForcedOutcome::Included { .. })).count();
    let total = cfg.trials + cfg.broken_trials;
    let mut r = ExperimentReport::new(id, master, total, 0.0);
    r.check("included_trials", gains.len() as f64, Relation::Ge, 1.0);
    let positive = gains.iter().filter(|&&g| g > 0.0).count();
    let fraction = if gains.is_empty() { 0.0 } else { positive as f64 / gains.len() as f64 };
    r.check("positive_gain_fraction", fraction, Relation::Eq, 1.0);
    r.stat("excluded_condition_unmet", unmet as f64);
    r.stat("excluded_broken_premise", broken_excluded as f64);
    r.stat("exclusion_rate", (total - gains.len()) as f64 / total as f64);
    r.stat("min_gain", gains.iter().copied().fold(f64::INFINITY, f64::min));
    r.note("trials where delta_u <= u_tau - u_min (e.g. an already optimal incumbent) or the premises fail are excluded and counted");
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NflConfig {
    /// Seed tables; each is closed under domain permutations.
    pub seed_tables: Vec<Vec<u8>>,
    /// Table whose closure is reweighted to compare transfer and general
    /// search.
    pub superiority_table: Vec<u8>,
    /// Location the transfer-biased optimizer probes first.
    pub probe: usize,
    pub superiority_horizon: usize,
}

impl Default for NflConfig {
    fn default() -> Self {
        Self {
            seed_tables: vec![
                vec![0, 1, 2],
                vec![0, 0, 1, 1],
                vec![0, 1, 2, 3],
                vec![0, 1, 1, 2, 3],
                vec![2, 0, 1, 1, 3],
                vec![0, 0, 0, 1, 2],
            ],
            superiority_table: vec![0, 1, 2, 3],
            probe: 2,
            superiority_horizon: 1,
        }
    }
}

impl NflConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        require(!self.seed_tables.is_empty(), "nfl.seed_tables must be nonempty")?;
        require(
            self.seed_tables.iter().all(|t| !t.is_empty() && t.len() <= 5),
            "nfl.seed_tables entries must have 1 to 5 points",
        )?;
        require(self.probe > 0 && self.probe < self.superiority_table.len(), "nfl.probe must lie in 1..|X|")?;
        require(
            self.superiority_horizon >= 1 && self.superiority_horizon < self.superiority_table.len(),
            "nfl.superiority_horizon must lie in 1..|X|",
        )
    }
}

pub(crate) fn nfl_optimizers(probe: usize) -> Vec<DeterministicOptimizer> {
    vec![
        DeterministicOptimizer::general("sequential", Policy::Sequential),
        DeterministicOptimizer::general("reverse", Policy::Reverse),
        DeterministicOptimizer::general("adaptive", Policy::Adaptive),
        DeterministicOptimizer::transfer("transfer", probe, 1),
    ]
}

pub fn nfl(cfg: &NflConfig) -> Result<ExperimentReport, LabError> {
    cfg.validate()?;
    let predicates = [SuccessPredicate::FoundMinimum, SuccessPredicate::BestAtMostQuantile(0.25)];
    let mut max_discrepancy = 0.0_f64;
    let mut unequal = 0usize;
    let mut comparisons = 0usize;
    for table in &cfg.seed_tables {
        let n = table.len();
        let fam = make_finite_family(n, table, FiniteDistribution::Uniform)?;
        let opts = nfl_optimizers(cfg.probe.min(n - 1));
        for h in 1..=n {
            for pred in predicates {
                let dots = opts
                    .iter()
                    .map(|o| {
                        let rec = alignment(o, &fam, h, pred)?;
                        max_discrepancy = max_discrepancy.max(rec.discrepancy());
                        Ok(rec.dot)
                    })
                    .collect::<Result<Vec<f64>, LabError>>()?;
                if fam.closed_under_permutation() {
                    comparisons += 1;
                    if dots.windows(2).any(|w| w[0] != w[1]) {
                        unequal += 1;
                    }
                }
            }
        }
    }

    let n = cfg.superiority_table.len();
    let fam = make_finite_family(n, &cfg.superiority_table, FiniteDistribution::Uniform)?;
    let general = DeterministicOptimizer::general("sequential", Policy::Sequential);
    let transfer = DeterministicOptimizer::transfer("transfer", cfg.probe, 1);
    let mut margin = |family: &crate::tasks::FiniteTaskFamily| -> Result<f64, LabError> {
        let a = alignment(&transfer, family, cfg.superiority_horizon, SuccessPredicate::FoundMinimum)?;
        let b = alignment(&general, family, cfg.superiority_horizon, SuccessPredicate::FoundMinimum)?;
        max_discrepancy = max_discrepancy.max(a.discrepancy()).max(b.discrepancy());
        Ok(a.dot - b.dot)
    };
    // near: minima where the transfer probe looks first; far: where general
    // search looks first
    let aligned = concentrated_distribution(&fam, cfg.probe, 0)?;
    let misaligned = concentrated_distribution(&fam, 0, cfg.probe)?;
    let win = margin(&aligned)?;
    let loss = margin(&misaligned)?;

    let mut r = ExperimentReport::new(ExperimentId::Nfl, 0, cfg.seed_tables.len(), DECOMPOSITION_TOLERANCE);
    r.check("max_decomposition_discrepancy", max_discrepancy, Relation::Le, DECOMPOSITION_TOLERANCE);
    r.check("closed_family_comparisons", comparisons as f64, Relation::Ge, 1.0);
    r.check("unequal_optimizer_sets", unequal as f64, Relation::Eq, 0.0);
    r.check("transfer_margin_aligned", win, Relation::Gt, 0.0);
    r.check("transfer_margin_misaligned", loss, Relation::Lt, 0.0);
    r.note("optimizers condition on (point, value) histories, standing in for knowledge histories");
    Ok(r)
}
