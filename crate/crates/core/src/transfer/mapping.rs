//! Mapping: adapt source knowledge so the adapted source task looks more like
//! the target.
//!
//! Explicit mappings act on observables (`phi(w)`) and are then applied to the
//! knowledge itself. A learned mapping is only returned when it strictly
//! raises similarity; otherwise the identity comes back flagged
//! [`MappingStatus::NotRealizable`].
//!
//! The mixture mapping is implicit: it searches the probability simplex for
//! the convex combination of pool candidates whose combined observable is most
//! similar to the target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::kernel::{Knowledge, ObservableProperty, PopulationStats, SimilarityScore, Task};
use crate::similarity::{psd_sqrt, SimilarityMetric};

use super::{SourcePool, TransferError};

/// Largest dimension the dense affine family accepts.
pub const AFFINE_MAX_DIM: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingFamily {
    /// `{id}` only; never realizes an improvement.
    Identity,
    Translation,
    Affine,
    MixtureWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingHypothesis {
    pub family: MappingFamily,
    pub max_iters: usize,
    pub step_tolerance: f64,
}

impl MappingHypothesis {
    pub fn new(family: MappingFamily) -> Self {
        Self {
            family,
            max_iters: 200,
            step_tolerance: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if self.max_iters == 0 {
            return Err(TransferError::InvalidHypothesis("max_iters must be positive".into()));
        }
        if !(self.step_tolerance > 0.0 && self.step_tolerance.is_finite()) {
            return Err(TransferError::InvalidHypothesis(
                "step_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MappingDescriptor {
    Identity { dim: usize },
    Translation { offset: Vec<f64> },
    Affine { matrix: DMatrix<f64>, offset: Vec<f64> },
}

impl MappingDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Translation { offset } | Self::Affine { offset, .. } => offset.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity { .. })
    }

    pub fn transform_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Identity { .. } => x.to_vec(),
            Self::Translation { offset } => x.iter().zip(offset).map(|(a, b)| a + b).collect(),
            Self::Affine { matrix, offset } => {
                let y = matrix * DVector::from_column_slice(x);
                y.iter().zip(offset).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// `phi(w)`: pushes a parameter vector, or a Gaussian summary, through
    /// the map.
    pub fn transform_observable(&self, w: &ObservableProperty) -> Result<ObservableProperty, TransferError> {
        if w.dim() != self.dim() {
            return Err(TransferError::DimensionMismatch {
                expected: self.dim(),
                actual: w.dim(),
            });
        }
        Ok(match w {
            ObservableProperty::ParamVector(p) => ObservableProperty::ParamVector(self.transform_point(p)),
            ObservableProperty::PopulationStats(st) => {
                let mean = self.transform_point(st.mean().as_slice());
                let cov = match self {
                    Self::Identity { .. } | Self::Translation { .. } => st.covariance().clone(),
                    Self::Affine { matrix, .. } => {
                        let c = matrix * st.covariance() * matrix.transpose();
                        (&c + c.transpose()) * 0.5
                    }
                };
                ObservableProperty::PopulationStats(PopulationStats::new(
                    DVector::from_vec(mean),
                    cov,
                    st.sample_count(),
                )?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MappingStatus {
    /// Similarity strictly increased and the search converged.
    Improved,
    /// No strictly improving map exists in the family (or none was found).
    NotRealizable,
    /// Improved, but the search hit `max_iters` before the step shrank below
    /// `step_tolerance`; best-so-far is returned.
    NonConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedMapping {
    pub descriptor: MappingDescriptor,
    pub before: SimilarityScore,
    pub achieved: SimilarityScore,
    pub status: MappingStatus,
}

fn psd_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs())).max(1.0);
    let inv = eig
        .eigenvalues
        .map(|v| if v > 1e-12 * scale { 1.0 / v.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

fn closed_form(
    family: MappingFamily,
    source: &ObservableProperty,
    target: &ObservableProperty,
) -> Result<MappingDescriptor, TransferError> {
    use ObservableProperty::*;
    let d = source.dim();
    let shift = |a: &[f64], b: &[f64]| b.iter().zip(a).map(|(t, s)| t - s).collect::<Vec<f64>>();
    Ok(match (family, source, target) {
        (MappingFamily::Identity, _, _) => MappingDescriptor::Identity { dim: d },
        (MappingFamily::Translation, ParamVector(s), ParamVector(t)) => {
            MappingDescriptor::Translation { offset: shift(s, t) }
        }
        (MappingFamily::Translation, PopulationStats(s), PopulationStats(t)) => {
            MappingDescriptor::Translation {
                offset: shift(s.mean().as_slice(), t.mean().as_slice()),
            }
        }
        (MappingFamily::Affine, ParamVector(s), ParamVector(t)) => MappingDescriptor::Affine {
            matrix: DMatrix::identity(d, d),
            offset: shift(s, t),
        },
        (MappingFamily::Affine, PopulationStats(s), PopulationStats(t)) => {
            // Gaussian optimal-transport map from N(mu_s, S) to N(mu_t, T)
            let ss = psd_sqrt(s.covariance())?;
            let ss_inv = psd_inv_sqrt(s.covariance());
            let mid = psd_sqrt(&(&ss * t.covariance() * &ss))?;
            let a = &ss_inv * mid * &ss_inv;
            let a = (&a + a.transpose()) * 0.5;
            let am = &a * s.mean();
            let offset = t.mean().iter().zip(am.iter()).map(|(x, y)| x - y).collect();
            MappingDescriptor::Affine { matrix: a, offset }
        }
        (MappingFamily::MixtureWeights, _, _) => {
            return Err(TransferError::InvalidHypothesis(
                "mixture mappings act on pools; use optimize_mixture_weights".into(),
            ))
        }
        _ => {
            return Err(TransferError::UnsupportedObservable(format!(
                "{} -> {}",
                source.kind_name(),
                target.kind_name()
            )))
        }
    })
}

fn to_params(d: &MappingDescriptor) -> Vec<f64> {
    match d {
        MappingDescriptor::Identity { .. } => Vec::new(),
        MappingDescriptor::Translation { offset } => offset.clone(),
        MappingDescriptor::Affine { matrix, offset } => {
            matrix.iter().copied().chain(offset.iter().copied()).collect()
        }
    }
}

fn from_params(template: &MappingDescriptor, p: &[f64]) -> MappingDescriptor {
    match template {
        MappingDescriptor::Identity { dim } => MappingDescriptor::Identity { dim: *dim },
        MappingDescriptor::Translation { .. } => MappingDescriptor::Translation { offset: p.to_vec() },
        MappingDescriptor::Affine { matrix, .. } => {
            let n = matrix.len();
            MappingDescriptor::Affine {
                matrix: DMatrix::from_column_slice(matrix.nrows(), matrix.ncols(), &p[..n]),
                offset: p[n..].to_vec(),
            }
        }
    }
}

/// Find the map in the hypothesis family that maximizes the similarity
/// between the adapted source observable and the target observable.
///
/// The search starts from the family's closed-form optimum for the
/// observable kind and polishes it with a compass search, which matters when
/// the closed form is inexact (for instance a singular source covariance).
pub fn learn_mapping(
    source: &Task,
    source_knowledge: &Knowledge,
    target_observable: &ObservableProperty,
    hypothesis: &MappingHypothesis,
    metric: &SimilarityMetric,
) -> Result<LearnedMapping, TransferError> {
    hypothesis.validate()?;
    let d = source.dim();
    if source_knowledge.solution.len() != d || target_observable.dim() != d {
        return Err(TransferError::DimensionMismatch {
            expected: d,
            actual: target_observable.dim().max(source_knowledge.solution.len()),
        });
    }
    if hypothesis.family == MappingFamily::Affine && d > AFFINE_MAX_DIM {
        return Err(TransferError::InvalidHypothesis(format!(
            "affine family supports d <= {AFFINE_MAX_DIM}, got {d}"
        )));
    }
    let source_obs = source.observable();
    let template = closed_form(hypothesis.family, source_obs, target_observable)?;
    let before = metric.measure(source_obs, target_observable)?;
    let score = |desc: &MappingDescriptor| -> f64 {
        desc.transform_observable(source_obs)
            .ok()
            .and_then(|w| metric.measure(&w, target_observable).ok())
            .map_or(f64::NEG_INFINITY, |s| s.value())
    };

    let mut params = to_params(&template);
    let mut best = score(&template);
    let mut converged = true;

    if !params.is_empty() && best < metric.maximum() {
        let mut step = 0.1 * params.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        let mut iters = 0;
        converged = false;
        while iters < hypothesis.max_iters {
            iters += 1;
            let mut moved = false;
            for i in 0..params.len() {
                for dir in [1.0, -1.0] {
                    let mut trial = params.clone();
                    trial[i] += dir * step;
                    let v = score(&from_params(&template, &trial));
                    if v > best {
                        best = v;
                        params = trial;
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                step *= 0.5;
                if step < hypothesis.step_tolerance {
                    converged = true;
                    break;
                }
            }
        }
    }

    let descriptor = from_params(&template, &params);
    let achieved = SimilarityScore::new(best)?;
    if achieved > before && !descriptor.is_identity() {
        Ok(LearnedMapping {
            descriptor,
            before,
            achieved,
            status: if converged {
                MappingStatus::Improved
            } else {
                MappingStatus::NonConvergence
            },
        })
    } else {
        Ok(LearnedMapping {
            descriptor: MappingDescriptor::Identity { dim: d },
            before,
            achieved: before,
            status: MappingStatus::NotRealizable,
        })
    }
}

/// Apply a learned map to knowledge, clamping into the target's bounds.
pub fn apply_mapping(
    descriptor: &MappingDescriptor,
    v: &Knowledge,
    target: &Task,
) -> Result<Knowledge, TransferError> {
    if descriptor.dim() != v.solution.len() || target.dim() != v.solution.len() {
        return Err(TransferError::DimensionMismatch {
            expected: descriptor.dim(),
            actual: v.solution.len(),
        });
    }
    let (solution, clamped) = target.clamp(&descriptor.transform_point(&v.solution));
    Ok(Knowledge {
        solution,
        origin: v.origin,
        adapted: true,
        clamped: v.clamped || clamped,
    })
}

/// Moment-matched combination of observables under `weights`.
pub fn mixture_observable(
    observables: &[&ObservableProperty],
    weights: &[f64],
) -> Result<ObservableProperty, TransferError> {
    let first = observables.first().ok_or(TransferError::EmptyPool)?;
    let d = first.dim();
    match first {
        ObservableProperty::ParamVector(_) => {
            let mut acc = vec![0.0; d];
            for (obs, &w) in observables.iter().zip(weights) {
                let ObservableProperty::ParamVector(p) = obs else {
                    return Err(TransferError::UnsupportedObservable("mixed observable kinds".into()));
                };
                for (a, x) in acc.iter_mut().zip(p) {
                    *a += w * x;
                }
            }
            Ok(ObservableProperty::ParamVector(acc))
        }
        ObservableProperty::PopulationStats(_) => {
            let mut mean = DVector::zeros(d);
            let mut second = DMatrix::zeros(d, d);
            let mut count = usize::MAX;
            for (obs, &w) in observables.iter().zip(weights) {
                let ObservableProperty::PopulationStats(st) = obs else {
                    return Err(TransferError::UnsupportedObservable("mixed observable kinds".into()));
                };
                mean += st.mean() * w;
                second += (st.covariance() + st.mean() * st.mean().transpose()) * w;
                count = count.min(st.sample_count());
            }
            let cov = second - &mean * mean.transpose();
            let cov = (&cov + cov.transpose()) * 0.5;
            Ok(ObservableProperty::PopulationStats(PopulationStats::new(mean, cov, count)?))
        }
    }
}

fn validate_weights(weights: &[f64], k: usize) -> Result<(), TransferError> {
    if weights.len() != k {
        return Err(TransferError::LengthMismatch {
            expected: k,
            actual: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(TransferError::NegativeWeight(w));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(TransferError::WeightSumViolation(total));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureOutcome {
    pub knowledge: Knowledge,
    pub similarity: SimilarityScore,
    pub weights: Vec<f64>,
}

/// Convex combination of the pool's knowledge under `weights`.
pub fn map_mixture(
    pool: &SourcePool,
    weights: &[f64],
    target: &Task,
    metric: &SimilarityMetric,
) -> Result<MixtureOutcome, TransferError> {
    let entries = pool.entries();
    validate_weights(weights, entries.len())?;
    let d = target.dim();
    let mut solution = vec![0.0; d];
    for (e, &w) in entries.iter().zip(weights) {
        if e.knowledge.solution.len() != d {
            return Err(TransferError::DimensionMismatch {
                expected: d,
                actual: e.knowledge.solution.len(),
            });
        }
        for (a, x) in solution.iter_mut().zip(&e.knowledge.solution) {
            *a += w * x;
        }
    }
    let observables: Vec<&ObservableProperty> = entries.iter().map(|e| e.task.observable()).collect();
    let combined = mixture_observable(&observables, weights)?;
    let similarity = metric.measure(&combined, target.observable())?;
    let (solution, clamped) = target.clamp(&solution);
    let heaviest = (0..weights.len())
        .max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    Ok(MixtureOutcome {
        knowledge: Knowledge {
            solution,
            origin: entries[heaviest].knowledge.origin,
            adapted: true,
            clamped,
        },
        similarity,
        weights: weights.to_vec(),
    })
}

/// Maximize `f` over the probability simplex of dimension `k`, starting at
/// vertex `start`. Pairwise (Frank-Wolfe style) moves: shift mass from the
/// worst active vertex to the best one with a golden-section line search.
/// Only strictly improving moves are taken, so the result is never below
/// `f(e_start)`.
pub fn simplex_maximize(
    k: usize,
    f: impl Fn(&[f64]) -> f64,
    start: usize,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; k];
    w[start] = 1.0;
    let mut fw = f(&w);
    if k < 2 {
        return (w, fw);
    }
    let h = 1e-7;
    for _ in 0..max_iters {
        let slopes: Vec<f64> = (0..k)
            .map(|i| {
                let probe: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| x + h * (if i == j { 1.0 } else { 0.0 } - x))
                    .collect();
                (f(&probe) - fw) / h
            })
            .collect();
        let up = (0..k).max_by(|&a, &b| slopes[a].total_cmp(&slopes[b])).unwrap();
        let down = (0..k)
            .filter(|&j| w[j] > 0.0 && j != up)
            .min_by(|&a, &b| slopes[a].total_cmp(&slopes[b]));
        let Some(down) = down else { break };
        if !(slopes[up] > slopes[down]) {
            break;
        }
        let cap = w[down];
        let along = |t: f64| {
            let mut x = w.clone();
            x[up] += t;
            x[down] -= t;
            if x[down] < 0.0 {
                x[down] = 0.0;
            }
            x
        };
        let g = |t: f64| f(&along(t));
        let t = golden_max(&g, 0.0, cap);
        // also consider the full move, golden search never evaluates endpoints
        let (t, gt) = [t, cap]
            .into_iter()
            .map(|t| (t, g(t)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if gt > fw {
            w = along(t);
            if t == cap {
                w[down] = 0.0;
            }
            fw = gt;
        } else {
            break;
        }
    }
    (w, fw)
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
    }
    if gc > gd {
        c
    } else {
        d
    }
}

/// Simplex weights over the pool that maximize the similarity of the combined
/// observable to the target. Starts from the most similar single candidate.
pub fn optimize_mixture_weights(
    pool: &SourcePool,
    target: &ObservableProperty,
    metric: &SimilarityMetric,
    max_iters: usize,
) -> Result<Vec<f64>, TransferError> {
    let entries = pool.entries();
    if entries.len() < 2 {
        return Err(TransferError::InvalidHypothesis(
            "mixture mapping needs at least two candidates".into(),
        ));
    }
    let observables: Vec<&ObservableProperty> = entries.iter().map(|e| e.task.observable()).collect();
    // validate once, so the objective below can treat failures as -inf
    let vertex: Vec<f64> = observables
        .iter()
        .map(|o| metric.measure(o, target).map(|s| s.value()))
        .collect::<Result<_, _>>()?;
    let start = (0..vertex.len())
        .max_by(|&a, &b| vertex[a].total_cmp(&vertex[b]).then(b.cmp(&a)))
        .unwrap();
    let f = |w: &[f64]| -> f64 {
        mixture_observable(&observables, w)
            .ok()
            .and_then(|o| metric.measure(&o, target).ok())
            .map_or(f64::NEG_INFINITY, |s| s.value())
    };
    let (w, _) = simplex_maximize(entries.len(), f, start, max_iters);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::TaskId;
    use crate::similarity::squared_distance;
    use crate::tasks::{make_family, FamilyKind, FamilySpec, UsefulnessOracle};
    use crate::transfer::test_support::{param_pool, param_task};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn translation() -> MappingHypothesis {
        MappingHypothesis::new(MappingFamily::Translation)
    }

    #[test]
    fn translation_finds_exact_shift() {
        let src = param_task(1, &[2.0, 2.0]);
        let v = Knowledge::new(vec![2.0, 2.0], TaskId(1));
        let target = ObservableProperty::ParamVector(vec![0.0, 0.0]);
        let m = SimilarityMetric::neg_param_distance();
        let learned = learn_mapping(&src, &v, &target, &translation(), &m).unwrap();
        assert_eq!(learned.status, MappingStatus::Improved);
        assert_eq!(learned.achieved.value(), 0.0);
        assert_eq!(
            learned.descriptor,
            MappingDescriptor::Translation { offset: vec![-2.0, -2.0] }
        );
        let tgt = param_task(0, &[0.0, 0.0]);
        let mapped = apply_mapping(&learned.descriptor, &v, &tgt).unwrap();
        assert_eq!(mapped.solution, vec![0.0, 0.0]);
        assert!(mapped.adapted);
    }

    #[test]
    fn identical_source_is_not_realizable() {
        let src = param_task(1, &[0.5, -0.5]);
        let v = Knowledge::new(vec![0.5, -0.5], TaskId(1));
        let target = src.observable().clone();
        let learned =
            learn_mapping(&src, &v, &target, &translation(), &SimilarityMetric::neg_param_distance()).unwrap();
        assert_eq!(learned.status, MappingStatus::NotRealizable);
        assert!(learned.descriptor.is_identity());
        let idv = MappingHypothesis::new(MappingFamily::Identity);
        let other = ObservableProperty::ParamVector(vec![3.0, 3.0]);
        let learned = learn_mapping(&src, &v, &other, &idv, &SimilarityMetric::neg_param_distance()).unwrap();
        assert_eq!(learned.status, MappingStatus::NotRealizable);
    }

    #[test]
    fn affine_beats_translation_on_rotated_family() {
        let spec = FamilySpec::new(FamilyKind::ShiftedRotatedEllipsoid, 3, 1.0, 8);
        let fam = make_family(&spec, 1, &[0.0, 0.0, 0.0]).unwrap();
        let e = &fam.pool.entries()[0];
        let m = SimilarityMetric::gaussian_w2();
        let t = learn_mapping(&e.task, &e.knowledge, fam.target.observable(), &translation(), &m).unwrap();
        let a = learn_mapping(
            &e.task,
            &e.knowledge,
            fam.target.observable(),
            &MappingHypothesis::new(MappingFamily::Affine),
            &m,
        )
        .unwrap();
        assert!(a.achieved > t.achieved, "{} vs {}", a.achieved, t.achieved);
        assert!(t.achieved >= t.before);
        // the Gaussian transport map is exact up to rounding
        assert!(a.achieved.value() > -1e-6);
    }

    #[test]
    fn affine_application_matches_direct_arithmetic() {
        let a = DMatrix::from_row_slice(2, 2, &[1.5, -0.3, 0.2, 0.8]);
        let desc = MappingDescriptor::Affine {
            matrix: a,
            offset: vec![0.1, -0.2],
        };
        let tgt = param_task(0, &[0.0, 0.0]);
        let v = Knowledge::new(vec![1.0, 2.0], TaskId(3));
        let out = apply_mapping(&desc, &v, &tgt).unwrap();
        let expect = [1.5 * 1.0 + -0.3 * 2.0 + 0.1, 0.2 * 1.0 + 0.8 * 2.0 - 0.2];
        assert!((out.solution[0] - expect[0]).abs() < 1e-15);
        assert!((out.solution[1] - expect[1]).abs() < 1e-15);

        let id = MappingDescriptor::Identity { dim: 2 };
        let same = apply_mapping(&id, &v, &tgt).unwrap();
        assert_eq!(same.solution, v.solution);
        assert!(same.adapted && !same.clamped);

        let far = MappingDescriptor::Translation { offset: vec![100.0, 0.0] };
        let clamped = apply_mapping(&far, &v, &tgt).unwrap();
        assert!(clamped.clamped);
        assert!(tgt.contains(&clamped.solution));

        let bad = MappingDescriptor::Identity { dim: 3 };
        assert!(matches!(
            apply_mapping(&bad, &v, &tgt),
            Err(TransferError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unsupported_observable_and_limits() {
        let spec = FamilySpec::new(FamilyKind::ShiftedRotatedEllipsoid, 2, 1.0, 1);
        let fam = make_family(&spec, 1, &[0.0, 0.0]).unwrap();
        let e = &fam.pool.entries()[0];
        let target = ObservableProperty::ParamVector(vec![0.0, 0.0]);
        assert!(matches!(
            learn_mapping(&e.task, &e.knowledge, &target, &translation(), &SimilarityMetric::gaussian_w2()),
            Err(TransferError::UnsupportedObservable(_))
        ));
        let big = param_task(1, &vec![0.0; 51]);
        let v = Knowledge::new(vec![0.0; 51], TaskId(1));
        assert!(matches!(
            learn_mapping(
                &big,
                &v,
                &ObservableProperty::ParamVector(vec![1.0; 51]),
                &MappingHypothesis::new(MappingFamily::Affine),
                &SimilarityMetric::neg_param_distance()
            ),
            Err(TransferError::InvalidHypothesis(_))
        ));
    }

    #[test]
    fn mixture_vertices_and_symmetry() {
        let pool = param_pool(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let tgt = param_task(0, &[0.0, 0.0]);
        let m = SimilarityMetric::neg_param_distance();
        let one_hot = map_mixture(&pool, &[0.0, 1.0], &tgt, &m).unwrap();
        assert_eq!(one_hot.knowledge.solution, vec![1.0, 0.0]);
        let w = optimize_mixture_weights(&pool, tgt.observable(), &m, 200).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-6 && (w[1] - 0.5).abs() < 1e-6, "{w:?}");
        let out = map_mixture(&pool, &w, &tgt, &m).unwrap();
        assert!(out.knowledge.solution.iter().all(|x| x.abs() < 1e-6));

        assert!(matches!(
            map_mixture(&pool, &[0.5, 0.6], &tgt, &m),
            Err(TransferError::WeightSumViolation(_))
        ));
        assert!(matches!(
            map_mixture(&pool, &[1.0], &tgt, &m),
            Err(TransferError::LengthMismatch { .. })
        ));
        assert!(matches!(
            map_mixture(&pool, &[1.5, -0.5], &tgt, &m),
            Err(TransferError::NegativeWeight(_))
        ));
        let lone = param_pool(&[&[1.0, 0.0]]);
        assert!(optimize_mixture_weights(&lone, tgt.observable(), &m, 10).is_err());
    }

    #[test]
    fn mixture_beats_dense_simplex_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = SimilarityMetric::neg_param_distance();
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                .collect();
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let pool = param_pool(&refs);
            let target = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let tgt = param_task(0, &target);
            // oracle: 1/400 grid over the 2-simplex
            let n = 400;
            let mut grid_best = f64::NEG_INFINITY;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let w = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                    let x: Vec<f64> = (0..2).map(|c| (0..3).map(|p| w[p] * pts[p][c]).sum()).collect();
                    grid_best = grid_best.max(-squared_distance(&x, &target).sqrt());
                }
            }
            let w = optimize_mixture_weights(&pool, tgt.observable(), &m, 500).unwrap();
            let got = map_mixture(&pool, &w, &tgt, &m).unwrap().similarity.value();
            assert!(got >= grid_best - 1e-6, "{got} < {grid_best}");
        }
    }

    #[test]
    fn mixture_on_population_observables() {
        let spec = FamilySpec::new(FamilyKind::ShiftedRotatedEllipsoid, 2, 1.0, 5);
        let fam = make_family(&spec, 4, &[0.0, 0.0]).unwrap();
        let m = SimilarityMetric::gaussian_w2();
        let best_vertex = fam
            .pool
            .entries()
            .iter()
            .map(|e| m.measure(e.task.observable(), fam.target.observable()).unwrap())
            .max()
            .unwrap();
        let w = optimize_mixture_weights(&fam.pool, fam.target.observable(), &m, 200).unwrap();
        let out = map_mixture(&fam.pool, &w, &fam.target, &m).unwrap();
        assert!(out.similarity.value() >= best_vertex.value() - 1e-9);
    }

    #[test]
    fn mapping_raises_usefulness_on_sphere() {
        for seed in 0..30 {
            let spec = FamilySpec::new(FamilyKind::ShiftedSphere, 3, 1.0, seed);
            let fam = make_family(&spec, 1, &[0.3, 0.0, -0.2]).unwrap();
            let oracle = UsefulnessOracle::new(fam.target.clone());
            let e = &fam.pool.entries()[0];
            let m = SimilarityMetric::neg_param_distance();
            let learned = learn_mapping(&e.task, &e.knowledge, fam.target.observable(), &translation(), &m).unwrap();
            assert!(learned.achieved >= learned.before);
            let mapped = apply_mapping(&learned.descriptor, &e.knowledge, &fam.target).unwrap();
            assert!(oracle.usefulness(&mapped).unwrap() >= oracle.usefulness(&e.knowledge).unwrap());
        }
    }

    proptest! {
        #[test]
        fn mixture_never_below_best_vertex(
            pts in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), 2..6),
            target in proptest::collection::vec(-2.0f64..2.0, 2),
        ) {
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let pool = param_pool(&refs);
            let tgt = param_task(0, &target);
            let m = SimilarityMetric::neg_param_distance();
            let best = pts.iter().map(|p| -squared_distance(p, &target).sqrt()).fold(f64::NEG_INFINITY, f64::max);
            let w = optimize_mixture_weights(&pool, tgt.observable(), &m, 300).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            let out = map_mixture(&pool, &w, &tgt, &m).unwrap();
            prop_assert!(out.similarity.value() >= best - 1e-9);
        }
    }
}
