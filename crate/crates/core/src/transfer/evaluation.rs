//! Evaluation: accept a candidate only when its similarity clears a
//! threshold, otherwise keep the incumbent.

use serde::{Deserialize, Serialize};

use crate::kernel::{
    check_monotone_premises, Knowledge, LinkDirection, MonotoneLink, ObservableProperty, SimilarityScore,
    TargetState,
};
use crate::similarity::SimilarityMetric;

use super::mapping::simplex_maximize;
use super::retrieval::pool_similarities;
use super::{SourcePool, TransferError};

/// Weight below which a mixture component counts as washed out.
pub const WASHOUT_WEIGHT: f64 = 1e-6;

/// Link samples used to check invertibility before calibrating.
const CALIBRATION_SAMPLES: usize = 1025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Strict comparison `s > threshold`.
    Explicit,
    /// Mix the candidate with the incumbent (valued at the threshold) and
    /// keep it only if the similarity-optimal weights do not wash it out.
    MixtureWashout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluationGate {
    pub threshold: SimilarityScore,
    pub mode: GateMode,
}

impl EvaluationGate {
    pub fn new(threshold: SimilarityScore, mode: GateMode) -> Self {
        Self { threshold, mode }
    }

    pub fn explicit(threshold: SimilarityScore) -> Self {
        Self::new(threshold, GateMode::Explicit)
    }

    pub fn accepts(&self, candidate_similarity: SimilarityScore) -> bool {
        match self.mode {
            GateMode::Explicit => candidate_similarity > self.threshold,
            GateMode::MixtureWashout => {
                let (inc, cand) = (self.threshold.value(), candidate_similarity.value());
                // component 0 is the incumbent; ties stay there because the
                // maximizer only takes strict improvements
                let (w, _) = simplex_maximize(2, |w| w[0] * inc + w[1] * cand, 0, 8);
                w[1] >= WASHOUT_WEIGHT
            }
        }
    }
}

/// The candidate if the gate accepts it, otherwise the incumbent unchanged.
pub fn evaluate_gate(
    gate: &EvaluationGate,
    candidate: &Knowledge,
    candidate_similarity: SimilarityScore,
    state: &TargetState,
) -> Knowledge {
    if gate.accepts(candidate_similarity) {
        candidate.clone()
    } else {
        state.incumbent.clone()
    }
}

/// `f^{-1}(u_tau)`: the similarity above which the link promises usefulness
/// strictly greater than the incumbent's.
///
/// Bisects to adjacent floats and returns the lower endpoint, so that
/// `s > threshold` holds exactly when `f(s) > u_tau` for a link that is
/// monotone in floating point. Decreasing links are calibrated on negated
/// similarity and the threshold is returned in that negated space.
pub fn calibrate_threshold(state: &TargetState, link: &MonotoneLink) -> Result<SimilarityScore, TransferError> {
    let samples = link
        .sample(CALIBRATION_SAMPLES)
        .map_err(|e| TransferError::LinkNotInvertible(e.to_string()))?;
    let flip = match link.direction() {
        LinkDirection::Increasing => 1.0,
        LinkDirection::Decreasing => -1.0,
    };
    let normalized: Vec<_> = samples
        .iter()
        .map(|&(s, u)| (SimilarityScore::new(flip * s.value()).unwrap(), u))
        .collect();
    let premise = check_monotone_premises(&normalized).map_err(|e| TransferError::LinkNotInvertible(e.to_string()))?;
    if !premise.holds() {
        return Err(TransferError::LinkNotInvertible(format!("{premise:?}")));
    }
    let g = |s: f64| link.eval_raw(flip * s);
    let (d0, d1) = link.domain();
    let (mut lo, mut hi) = if flip > 0.0 { (d0, d1) } else { (-d1, -d0) };
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo < g_hi) {
        return Err(TransferError::LinkNotInvertible(format!(
            "link does not increase across its domain ({g_lo} -> {g_hi})"
        )));
    }
    let u_tau = state.incumbent_usefulness.value();
    if u_tau < g_lo || u_tau > g_hi {
        return Err(TransferError::OutOfRange {
            value: u_tau,
            lo: g_lo,
            hi: g_hi,
        });
    }
    if g_hi <= u_tau {
        return Ok(SimilarityScore::new(hi)?);
    }
    // invariant: g(lo) <= u_tau < g(hi)
    loop {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= u_tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SimilarityScore::new(lo)?)
}

/// Indices the gate accepts and rejects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolPartition {
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
}

/// Split the pool by strict comparison against the gate threshold.
pub fn classify_pool(
    pool: &SourcePool,
    target: &ObservableProperty,
    metric: &SimilarityMetric,
    gate: &EvaluationGate,
) -> Result<PoolPartition, TransferError> {
    let scores = pool_similarities(pool, target, metric)?;
    let mut out = PoolPartition {
        accepted: Vec::new(),
        rejected: Vec::new(),
    };
    for (i, s) in scores.into_iter().enumerate() {
        if s == gate.threshold {
            return Err(TransferError::ThresholdTie(s.value()));
        }
        if gate.accepts(s) {
            out.accepted.push(i);
        } else {
            out.rejected.push(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{TaskId, Usefulness};
    use crate::tasks::{make_family, FamilyKind, FamilySpec, UsefulnessOracle};
    use crate::transfer::test_support::param_pool;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> SimilarityScore {
        SimilarityScore::new(x).unwrap()
    }

    fn state(u: f64) -> TargetState {
        TargetState {
            time: 0,
            incumbent: Knowledge::new(vec![9.0], TaskId(0)),
            incumbent_usefulness: Usefulness::new(u).unwrap(),
        }
    }

    #[test]
    fn gate_examples() {
        let st = state(0.0);
        let cand = Knowledge::new(vec![1.0], TaskId(4));
        for mode in [GateMode::Explicit, GateMode::MixtureWashout] {
            let g = EvaluationGate::new(s(0.5), mode);
            assert_eq!(evaluate_gate(&g, &cand, s(0.7), &st), cand);
            assert_eq!(evaluate_gate(&g, &cand, s(0.3), &st), st.incumbent);
            assert_eq!(evaluate_gate(&g, &cand, s(0.5), &st), st.incumbent);
        }
    }

    #[test]
    fn washout_agrees_with_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let t = rng.gen_range(-2.0..2.0);
            let c = if rng.gen_bool(0.1) { t } else { rng.gen_range(-2.0..2.0) };
            let e = EvaluationGate::new(s(t), GateMode::Explicit).accepts(s(c));
            let w = EvaluationGate::new(s(t), GateMode::MixtureWashout).accepts(s(c));
            assert_eq!(e, w, "threshold {t}, candidate {c}");
        }
    }

    #[test]
    fn calibration_examples() {
        let id = MonotoneLink::new(LinkDirection::Increasing, (0.0, 1.0), |s| s);
        assert_eq!(calibrate_threshold(&state(0.4), &id).unwrap().value(), 0.4);
        let cube = MonotoneLink::new(LinkDirection::Increasing, (0.0, 1.0), |s| s * s * s);
        let t = calibrate_threshold(&state(0.008), &cube).unwrap().value();
        assert!((t - 0.2).abs() < 1e-9, "{t}");
        assert!(matches!(
            calibrate_threshold(&state(2.0), &cube),
            Err(TransferError::OutOfRange { .. })
        ));
        let bump = MonotoneLink::new(LinkDirection::Increasing, (-1.0, 1.0), |s| -(s * s));
        assert!(matches!(
            calibrate_threshold(&state(-0.5), &bump),
            Err(TransferError::LinkNotInvertible(_))
        ));
        let down = MonotoneLink::new(LinkDirection::Decreasing, (0.0, 1.0), |s| 1.0 - s);
        let t = calibrate_threshold(&state(0.25), &down).unwrap().value();
        assert!((t + 0.75).abs() < 1e-12, "{t}");
    }

    #[test]
    fn calibrated_gate_matches_brute_force_on_sphere() {
        let m = SimilarityMetric::neg_param_distance();
        for seed in 0..10 {
            let spec = FamilySpec::new(FamilyKind::ShiftedSphere, 3, 1.0, seed);
            let fam = make_family(&spec, 200, &[0.0, 0.0, 0.0]).unwrap();
            let oracle = UsefulnessOracle::new(fam.target.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let inc: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let st = TargetState {
                time: 0,
                incumbent: Knowledge::new(inc.clone(), TaskId(0)),
                incumbent_usefulness: oracle.usefulness_of(&inc).unwrap(),
            };
            let thr = calibrate_threshold(&st, fam.link.known().unwrap()).unwrap();
            let part = classify_pool(&fam.pool, fam.target.observable(), &m, &EvaluationGate::explicit(thr)).unwrap();
            for (i, e) in fam.pool.entries().iter().enumerate() {
                let better = oracle.usefulness(&e.knowledge).unwrap() > st.incumbent_usefulness;
                assert_eq!(part.accepted.contains(&i), better, "seed {seed} source {i}");
            }
        }
    }

    #[test]
    fn classify_extremes_and_ties() {
        let pool = param_pool(&[&[1.0], &[2.0], &[3.0]]);
        let target = ObservableProperty::ParamVector(vec![0.0]);
        let m = SimilarityMetric::neg_param_distance();
        let all = classify_pool(&pool, &target, &m, &EvaluationGate::explicit(s(-10.0))).unwrap();
        assert!(all.rejected.is_empty());
        let none = classify_pool(&pool, &target, &m, &EvaluationGate::explicit(s(0.5))).unwrap();
        assert!(none.accepted.is_empty());
        assert!(matches!(
            classify_pool(&pool, &target, &m, &EvaluationGate::explicit(s(-2.0))),
            Err(TransferError::ThresholdTie(_))
        ));
    }

    proptest! {
        #[test]
        fn calibrated_threshold_separates_link(u_tau in -0.99f64..0.99, probe in -1.0f64..1.0) {
            let link = MonotoneLink::new(LinkDirection::Increasing, (-1.0, 1.0), |s| s * s * s);
            let thr = calibrate_threshold(&state(u_tau), &link).unwrap();
            prop_assert_eq!(probe > thr.value(), link.eval_raw(probe) > u_tau);
        }
    }
}
