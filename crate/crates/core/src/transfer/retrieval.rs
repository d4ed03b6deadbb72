//! Retrieval: pick (or weight) source knowledge by observable similarity.

use crate::kernel::{Knowledge, ObservableProperty, SimilarityScore};
use crate::similarity::SimilarityMetric;

use super::{SourcePool, TransferError};

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub index: usize,
    pub knowledge: Knowledge,
    pub similarity: SimilarityScore,
}

pub fn pool_similarities(
    pool: &SourcePool,
    target: &ObservableProperty,
    metric: &SimilarityMetric,
) -> Result<Vec<SimilarityScore>, TransferError> {
    pool.entries()
        .iter()
        .map(|e| Ok(metric.measure(e.task.observable(), target)?))
        .collect()
}

/// Index of the strictly largest score; exact ties at the top are an error.
pub(crate) fn strict_argmax(scores: &[SimilarityScore]) -> Result<usize, TransferError> {
    let mut best = 0;
    let mut tied = false;
    for (i, s) in scores.iter().enumerate().skip(1) {
        match s.cmp(&scores[best]) {
            std::cmp::Ordering::Greater => {
                best = i;
                tied = false;
            }
            std::cmp::Ordering::Equal => tied = true,
            std::cmp::Ordering::Less => {}
        }
    }
    if tied {
        return Err(TransferError::TiedArgmax(scores[best].value()));
    }
    Ok(best)
}

/// The pool entry whose observable is most similar to the target.
pub fn retrieve_hard(
    pool: &SourcePool,
    target: &ObservableProperty,
    metric: &SimilarityMetric,
) -> Result<Retrieved, TransferError> {
    let scores = pool_similarities(pool, target, metric)?;
    let index = strict_argmax(&scores)?;
    Ok(Retrieved {
        index,
        knowledge: pool.entries()[index].knowledge.clone(),
        similarity: scores[index],
    })
}

/// Softmax of `similarity / temperature` over the pool.
pub fn retrieve_soft(
    pool: &SourcePool,
    target: &ObservableProperty,
    metric: &SimilarityMetric,
    temperature: f64,
) -> Result<Vec<f64>, TransferError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(TransferError::InvalidTemperature(temperature));
    }
    let scores = pool_similarities(pool, target, metric)?;
    let raw: Vec<f64> = scores.iter().map(|s| s.value()).collect();
    Ok(softmax(&raw, temperature))
}

pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|&s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_family, FamilyKind, FamilySpec, UsefulnessOracle};
    use crate::transfer::test_support::param_pool;
    use proptest::prelude::*;

    #[test]
    fn hard_picks_argmax() {
        // NegParamDistance scores -0.8, -0.1, -0.5
        let pool = param_pool(&[&[0.8], &[0.1], &[0.5]]);
        let target = ObservableProperty::ParamVector(vec![0.0]);
        let r = retrieve_hard(&pool, &target, &SimilarityMetric::neg_param_distance()).unwrap();
        assert_eq!(r.index, 1);
        assert!((r.similarity.value() + 0.1).abs() < 1e-15);

        let single = param_pool(&[&[40.0]]);
        let r = retrieve_hard(&single, &target, &SimilarityMetric::neg_param_distance()).unwrap();
        assert_eq!(r.index, 0);

        let tied = param_pool(&[&[1.0], &[-1.0]]);
        assert!(matches!(
            retrieve_hard(&tied, &target, &SimilarityMetric::neg_param_distance()),
            Err(TransferError::TiedArgmax(_))
        ));
    }

    #[test]
    fn hard_matches_brute_force_usefulness() {
        let pool = param_pool(&[&[3.0, 3.0], &[1.0, 0.0], &[5.0, 5.0]]);
        let target = ObservableProperty::ParamVector(vec![0.0, 0.0]);
        let r = retrieve_hard(&pool, &target, &SimilarityMetric::neg_param_distance()).unwrap();
        assert_eq!(r.knowledge.solution, vec![1.0, 0.0]);
        // oracle: evaluate every source optimum on the target sphere
        let use_: Vec<f64> = pool
            .entries()
            .iter()
            .map(|e| -e.knowledge.solution.iter().map(|x| x * x).sum::<f64>())
            .collect();
        let best = (0..3).max_by(|&a, &b| use_[a].total_cmp(&use_[b])).unwrap();
        assert_eq!(best, r.index);
    }

    #[test]
    fn retrieval_consistent_with_usefulness_on_sphere_family() {
        for seed in 0..20 {
            let spec = FamilySpec::new(FamilyKind::ShiftedSphere, 3, 1.0, seed);
            let fam = make_family(&spec, 40, &[0.2, 0.1, -0.3]).unwrap();
            let oracle = UsefulnessOracle::new(fam.target.clone());
            let r = retrieve_hard(&fam.pool, fam.target.observable(), &SimilarityMetric::neg_param_distance())
                .unwrap();
            let best_u = fam
                .pool
                .entries()
                .iter()
                .map(|e| oracle.usefulness(&e.knowledge).unwrap())
                .max()
                .unwrap();
            assert_eq!(oracle.usefulness(&r.knowledge).unwrap(), best_u);
        }
    }

    #[test]
    fn soft_examples() {
        let s = softmax(&[0.3, 0.3, 0.3, 0.3], 0.7);
        assert!(s.iter().all(|w| (w - 0.25).abs() < 1e-15));
        let s = softmax(&[0.0, 2f64.ln()], 1.0);
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-15 && (s[1] - 2.0 / 3.0).abs() < 1e-15);
        let s = softmax(&[-0.5, -0.2, -0.9], 1e-4);
        assert!(s[1] > 0.999);

        let pool = param_pool(&[&[1.0], &[2.0]]);
        let target = ObservableProperty::ParamVector(vec![0.0]);
        let m = SimilarityMetric::neg_param_distance();
        assert!(matches!(
            retrieve_soft(&pool, &target, &m, 0.0),
            Err(TransferError::InvalidTemperature(_))
        ));
        let w = retrieve_soft(&pool, &target, &m, 1.0).unwrap();
        assert!(w[0] > w[1]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_preserves_order(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..20),
            t in 0.01f64..10.0,
        ) {
            let w = softmax(&scores, t);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] < scores[j] {
                        prop_assert!(w[i] <= w[j]);
                    }
                }
            }
        }
    }
}
