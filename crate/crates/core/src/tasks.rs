//! Synthetic task families with known ground truth, and finite enumerable
//! families for no-free-lunch style enumeration.
//!
//! Every continuous family shares one bounding box centred on the target
//! parameter with half-width `6 * spread`, so source optima, mapped knowledge
//! and adversarial sources all stay feasible for the target.

use std::collections::BTreeSet;
use std::sync::Arc;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    KernelError, Knowledge, LinkDirection, MonotoneLink, ObservableProperty, PopulationStats,
    Task, TaskId, Usefulness,
};
use crate::similarity::{squared_distance, MetricKind, SimilarityMetric};
use crate::transfer::{SourceEntry, SourcePool};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid family spec: {0}")]
    InvalidSpec(String),
    #[error("finite space too large: |X| = {size_x}, values = {values} (limits 6 and 4)")]
    SpaceTooLarge { size_x: usize, values: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Half-width of the shared bounding box, in units of `spread`.
pub const BOX_HALF_WIDTH: f64 = 6.0;
/// Condition number of the rotated ellipsoid's Hessian.
pub const ELLIPSOID_CONDITION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `f(x) = ||x - theta||^2`.
    ShiftedSphere,
    /// `f(x) = (x - theta)^T R D R^T (x - theta)` with a per-task rotation.
    ShiftedRotatedEllipsoid,
    /// A sphere plus a deeper secondary basin at `theta + spread * e1`.
    DeceptiveShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObservableMode {
    /// Observable is the parameter vector itself.
    Param,
    /// Observable is the moment summary of a population sampled around the
    /// task optimum.
    Population { sample_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub dimension: usize,
    pub spread: f64,
    pub seed: u64,
    pub observable: ObservableMode,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, dimension: usize, spread: f64, seed: u64) -> Self {
        let observable = match kind {
            FamilyKind::ShiftedRotatedEllipsoid => ObservableMode::Population { sample_count: 64 },
            _ => ObservableMode::Param,
        };
        Self {
            kind,
            dimension,
            spread,
            seed,
            observable,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.dimension == 0 {
            return Err(TaskError::InvalidSpec("dimension must be >= 1".into()));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(TaskError::InvalidSpec(format!(
                "spread must be positive, got {}",
                self.spread
            )));
        }
        if let ObservableMode::Population { sample_count } = self.observable {
            if sample_count < 2 {
                return Err(TaskError::InvalidSpec("sample_count must be >= 2".into()));
            }
        }
        Ok(())
    }

    /// Depth of the deceptive secondary basin: 1.5 times the primary basin's
    /// value at distance `spread / 2`.
    pub fn deceptive_depth(&self) -> f64 {
        1.5 * (self.spread / 2.0).powi(2)
    }
}

/// Where source parameters are drawn relative to the target parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourcePlacement {
    /// Uniform in the ball of radius `spread`.
    Ball,
    /// Uniform in a ball of radius `radius` whose centre sits `distance` away
    /// from the target in a random direction. Used to build pools whose
    /// members, and their convex hull, are all far from the target.
    Cluster { distance: f64, radius: f64 },
}

/// Ground-truth status of the similarity-to-usefulness link of a family.
#[derive(Debug, Clone)]
pub enum LinkStatus {
    Known(MonotoneLink),
    /// Premises are violated; `assumed` is the link a practitioner would
    /// posit if the deception were absent.
    Broken { assumed: MonotoneLink },
    Unknown,
}

impl LinkStatus {
    pub fn known(&self) -> Option<&MonotoneLink> {
        match self {
            Self::Known(l) => Some(l),
            _ => None,
        }
    }

    /// The known link, or the assumed one for broken families.
    pub fn usable(&self) -> Option<&MonotoneLink> {
        match self {
            Self::Known(l) | Self::Broken { assumed: l } => Some(l),
            Self::Unknown => None,
        }
    }
}

/// A generated source pool, target task and link.
#[derive(Debug, Clone)]
pub struct Family {
    pub spec: FamilySpec,
    pub pool: SourcePool,
    pub target: Task,
    pub target_param: Vec<f64>,
    pub source_params: Vec<Vec<f64>>,
    pub link: LinkStatus,
}

/// `u(v) = -target.objective(v)`.
#[derive(Debug, Clone)]
pub struct UsefulnessOracle {
    target: Task,
}

impl UsefulnessOracle {
    pub fn new(target: Task) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &Task {
        &self.target
    }

    pub fn usefulness(&self, v: &Knowledge) -> Result<Usefulness, TaskError> {
        self.usefulness_of(&v.solution)
    }

    pub fn usefulness_of(&self, x: &[f64]) -> Result<Usefulness, TaskError> {
        if x.len() != self.target.dim() {
            return Err(TaskError::DimensionMismatch {
                expected: self.target.dim(),
                actual: x.len(),
            });
        }
        Ok(Usefulness::new(-self.target.evaluate(x))?)
    }
}

pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let dir = sample_direction(rng, d);
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    center.iter().zip(dir).map(|(c, u)| c + r * u).collect()
}

pub fn sample_on_sphere<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let dir = sample_direction(rng, center.len());
    center.iter().zip(dir).map(|(c, u)| c + radius * u).collect()
}

fn sample_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut *rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column signs so the distribution is Haar
    let signs = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| r[(i, i)].signum()));
    q * signs
}

fn ellipsoid_hessian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let rot = random_rotation(rng, d);
    let diag = DVector::from_fn(d, |i, _| {
        if d == 1 {
            1.0
        } else {
            ELLIPSOID_CONDITION.powf(i as f64 / (d - 1) as f64)
        }
    });
    let h = &rot * DMatrix::from_diagonal(&diag) * rot.transpose();
    (&h + h.transpose()) * 0.5
}

struct Built {
    task: Task,
    optimum: Vec<f64>,
}

fn build_task<R: Rng + ?Sized>(
    spec: &FamilySpec,
    id: TaskId,
    theta: &[f64],
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> Result<Built, TaskError> {
    let d = spec.dimension;
    let th = theta.to_vec();
    let (objective, optimum, shape): (crate::kernel::Objective, Vec<f64>, DMatrix<f64>) =
        match spec.kind {
            FamilyKind::ShiftedSphere => {
                let t = th.clone();
                let shape = DMatrix::identity(d, d) * (spec.spread / 4.0).powi(2);
                (Arc::new(move |x: &[f64]| squared_distance(x, &t)), th.clone(), shape)
            }
            FamilyKind::ShiftedRotatedEllipsoid => {
                let h = ellipsoid_hessian(rng, d);
                let inv = h.clone().try_inverse().expect("rotation of a positive diagonal");
                let shape = inv * (spec.spread / 4.0).powi(2);
                let t = th.clone();
                let f = move |x: &[f64]| {
                    let z = DVector::from_iterator(d, x.iter().zip(&t).map(|(a, b)| a - b));
                    (z.transpose() * &h * &z)[(0, 0)]
                };
                (Arc::new(f), th.clone(), shape)
            }
            FamilyKind::DeceptiveShift => {
                let primary = th.clone();
                let mut secondary = th.clone();
                secondary[0] += spec.spread;
                let depth = spec.deceptive_depth();
                let shape = DMatrix::identity(d, d) * (spec.spread / 4.0).powi(2);
                let opt = secondary.clone();
                let f = move |x: &[f64]| {
                    squared_distance(x, &primary).min(squared_distance(x, &secondary) - depth)
                };
                (Arc::new(f), opt, shape)
            }
        };
    let observable = match spec.observable {
        ObservableMode::Param => ObservableProperty::ParamVector(th.clone()),
        ObservableMode::Population { sample_count } => {
            let chol = shape
                .clone()
                .cholesky()
                .ok_or_else(|| TaskError::InvalidSpec("population shape not PD".into()))?;
            let l = chol.l();
            let samples: Vec<Vec<f64>> = (0..sample_count)
                .map(|_| {
                    let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut *rng));
                    let x = &l * z;
                    th.iter().zip(x.iter()).map(|(a, b)| a + b).collect()
                })
                .collect();
            ObservableProperty::PopulationStats(PopulationStats::from_samples(&samples)?)
        }
    };
    let task = Task::new(id, objective, bounds.to_vec(), observable)?;
    Ok(Built { task, optimum })
}

/// Shared bounding box of a family centred on `target_param`.
pub fn family_bounds(target_param: &[f64], spread: f64) -> Vec<(f64, f64)> {
    target_param
        .iter()
        .map(|&c| (c - BOX_HALF_WIDTH * spread, c + BOX_HALF_WIDTH * spread))
        .collect()
}

pub fn make_family(spec: &FamilySpec, k: usize, target_param: &[f64]) -> Result<Family, TaskError> {
    make_family_with(spec, k, target_param, SourcePlacement::Ball)
}

pub fn make_family_with(
    spec: &FamilySpec,
    k: usize,
    target_param: &[f64],
    placement: SourcePlacement,
) -> Result<Family, TaskError> {
    spec.validate()?;
    if target_param.len() != spec.dimension {
        return Err(TaskError::DimensionMismatch {
            expected: spec.dimension,
            actual: target_param.len(),
        });
    }
    if k == 0 {
        return Err(TaskError::InvalidSpec("k must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bounds = family_bounds(target_param, spec.spread);
    let target = build_task(spec, TaskId(0), target_param, &bounds, &mut rng)?.task;

    let centre = match placement {
        SourcePlacement::Ball => target_param.to_vec(),
        SourcePlacement::Cluster { distance, .. } => {
            sample_on_sphere(&mut rng, target_param, distance)
        }
    };
    let radius = match placement {
        SourcePlacement::Ball => spec.spread,
        SourcePlacement::Cluster { radius, .. } => radius,
    };
    let mut entries = Vec::with_capacity(k);
    let mut source_params = Vec::with_capacity(k);
    for i in 0..k {
        let theta = sample_in_ball(&mut rng, &centre, radius);
        let built = build_task(spec, TaskId(i as u64 + 1), &theta, &bounds, &mut rng)?;
        let knowledge = Knowledge::on_task(&built.task, built.optimum)?;
        entries.push(SourceEntry {
            task: built.task,
            knowledge,
        });
        source_params.push(theta);
    }
    let pool = SourcePool::new(entries).expect("k >= 1 and origins set by construction");
    let link = family_link(spec, &SimilarityMetric::neg_param_distance());
    Ok(Family {
        spec: spec.clone(),
        pool,
        target,
        target_param: target_param.to_vec(),
        source_params,
        link,
    })
}

/// Largest parameter distance inside the shared box.
fn max_distance(spec: &FamilySpec) -> f64 {
    2.0 * BOX_HALF_WIDTH * spec.spread * (spec.dimension as f64).sqrt()
}

/// Similarity-to-usefulness link of a family under `metric`, for source
/// knowledge equal to each source's exact optimum.
pub fn family_link(spec: &FamilySpec, metric: &SimilarityMetric) -> LinkStatus {
    if spec.observable != ObservableMode::Param {
        return LinkStatus::Unknown;
    }
    let dmax = max_distance(spec);
    // usefulness as a function of parameter distance
    let (offset, known) = match spec.kind {
        FamilyKind::ShiftedSphere => (0.0, true),
        FamilyKind::DeceptiveShift => (spec.deceptive_depth(), false),
        FamilyKind::ShiftedRotatedEllipsoid => return LinkStatus::Unknown,
    };
    let link = match metric.kind() {
        MetricKind::NegParamDistance => {
            MonotoneLink::new(LinkDirection::Increasing, (-dmax, 0.0), move |s| offset - s * s)
        }
        MetricKind::RbfParam => {
            let c2 = 2.0 * metric.scale() * metric.scale();
            let lo = (-dmax * dmax / c2).exp().max(f64::MIN_POSITIVE);
            MonotoneLink::new(LinkDirection::Increasing, (lo, 1.0), move |s| offset + c2 * s.ln())
        }
        MetricKind::GaussianW2 => return LinkStatus::Unknown,
    };
    if known {
        LinkStatus::Known(link)
    } else {
        LinkStatus::Broken { assumed: link }
    }
}

/// A finite family of functions `g: {0..|X|} -> {0..values}` with a
/// probability distribution over its members.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTaskFamily {
    size_x: usize,
    value_set_size: usize,
    functions: Vec<Vec<u8>>,
    distribution: Vec<f64>,
    closed_under_permutation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FiniteDistribution {
    Uniform,
    Custom(Vec<f64>),
}

impl FiniteTaskFamily {
    /// Family over explicit functions; closure under permutation is checked
    /// rather than assumed.
    pub fn new(
        size_x: usize,
        value_set_size: usize,
        functions: Vec<Vec<u8>>,
        distribution: FiniteDistribution,
    ) -> Result<Self, TaskError> {
        if size_x == 0 || size_x > 6 || value_set_size == 0 || value_set_size > 4 {
            return Err(TaskError::SpaceTooLarge {
                size_x,
                values: value_set_size,
            });
        }
        if functions.is_empty() {
            return Err(TaskError::InvalidSpec("family has no functions".into()));
        }
        for g in &functions {
            if g.len() != size_x {
                return Err(TaskError::DimensionMismatch {
                    expected: size_x,
                    actual: g.len(),
                });
            }
            if g.iter().any(|&v| v as usize >= value_set_size) {
                return Err(TaskError::InvalidSpec(format!(
                    "value outside 0..{value_set_size}"
                )));
            }
        }
        let distribution = match distribution {
            FiniteDistribution::Uniform => vec![1.0 / functions.len() as f64; functions.len()],
            FiniteDistribution::Custom(p) => {
                if p.len() != functions.len() {
                    return Err(TaskError::InvalidDistribution(format!(
                        "{} weights for {} functions",
                        p.len(),
                        functions.len()
                    )));
                }
                if p.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                    return Err(TaskError::InvalidDistribution("negative weight".into()));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(TaskError::InvalidDistribution(format!("weights sum to {total}")));
                }
                p
            }
        };
        let closed = is_closed_under_permutation(size_x, &functions);
        Ok(Self {
            size_x,
            value_set_size,
            functions,
            distribution,
            closed_under_permutation: closed,
        })
    }

    pub fn size_x(&self) -> usize {
        self.size_x
    }

    pub fn value_set_size(&self) -> usize {
        self.value_set_size
    }

    pub fn functions(&self) -> &[Vec<u8>] {
        &self.functions
    }

    pub fn distribution(&self) -> &[f64] {
        &self.distribution
    }

    pub fn closed_under_permutation(&self) -> bool {
        self.closed_under_permutation
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Same functions, different distribution.
    pub fn reweighted(&self, distribution: FiniteDistribution) -> Result<Self, TaskError> {
        Self::new(
            self.size_x,
            self.value_set_size,
            self.functions.clone(),
            distribution,
        )
    }
}

fn permute(table: &[u8], perm: &[usize]) -> Vec<u8> {
    perm.iter().map(|&i| table[i]).collect()
}

fn is_closed_under_permutation(size_x: usize, functions: &[Vec<u8>]) -> bool {
    let members: BTreeSet<&Vec<u8>> = functions.iter().collect();
    (0..size_x).permutations(size_x).all(|perm| {
        functions
            .iter()
            .all(|g| members.contains(&permute(g, &perm)))
    })
}

/// Closure of `seed_table` under every permutation of the domain,
/// deduplicated and sorted lexicographically.
pub fn make_finite_family(
    size_x: usize,
    seed_table: &[u8],
    distribution: FiniteDistribution,
) -> Result<FiniteTaskFamily, TaskError> {
    let values = seed_table.iter().map(|&v| v as usize + 1).max().unwrap_or(0);
    if size_x > 6 || values > 4 {
        return Err(TaskError::SpaceTooLarge { size_x, values });
    }
    if seed_table.len() != size_x {
        return Err(TaskError::DimensionMismatch {
            expected: size_x,
            actual: seed_table.len(),
        });
    }
    let closure: BTreeSet<Vec<u8>> = (0..size_x)
        .permutations(size_x)
        .map(|perm| permute(seed_table, &perm))
        .collect();
    FiniteTaskFamily::new(size_x, values.max(1), closure.into_iter().collect(), distribution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{check_monotone_premises, SimilarityScore};
    use proptest::prelude::*;

    fn sphere(seed: u64) -> FamilySpec {
        FamilySpec::new(FamilyKind::ShiftedSphere, 2, 1.0, seed)
    }

    #[test]
    fn sphere_usefulness_is_negated_squared_distance() {
        let fam = make_family(&sphere(1), 5, &[0.5, -0.5]).unwrap();
        let oracle = UsefulnessOracle::new(fam.target.clone());
        for (e, th) in fam.pool.entries().iter().zip(&fam.source_params) {
            let u = oracle.usefulness(&e.knowledge).unwrap().value();
            let expect = -((th[0] - 0.5).powi(2) + (th[1] + 0.5).powi(2));
            assert!((u - expect).abs() < 1e-14);
        }
        let at_opt = Knowledge::new(vec![0.5, -0.5], TaskId(9));
        assert_eq!(oracle.usefulness(&at_opt).unwrap().value(), 0.0);
        let unit = UsefulnessOracle::new(make_family(&sphere(1), 1, &[0.0, 0.0]).unwrap().target);
        assert_eq!(unit.usefulness_of(&[1.0, 0.0]).unwrap().value(), -1.0);
        assert!(matches!(
            unit.usefulness_of(&[1.0]),
            Err(TaskError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn usefulness_makes_exactly_one_call() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let task = Task::new(
            TaskId(0),
            Arc::new(move |x: &[f64]| {
                c.fetch_add(1, Ordering::SeqCst);
                x[0] * 2.0
            }),
            vec![(-1.0, 1.0)],
            ObservableProperty::ParamVector(vec![0.0]),
        )
        .unwrap();
        let oracle = UsefulnessOracle::new(task);
        assert_eq!(oracle.usefulness_of(&[0.25]).unwrap().value(), -0.5);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn source_knowledge_is_true_optimum() {
        use rand::Rng;
        for kind in [
            FamilyKind::ShiftedSphere,
            FamilyKind::ShiftedRotatedEllipsoid,
            FamilyKind::DeceptiveShift,
        ] {
            let spec = FamilySpec::new(kind, 3, 1.0, 4);
            let fam = make_family(&spec, 3, &[0.0, 0.0, 0.0]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for e in fam.pool.entries() {
                let best = e.task.evaluate(&e.knowledge.solution);
                for _ in 0..20_000 {
                    let x: Vec<f64> = e
                        .task
                        .bounds()
                        .iter()
                        .map(|&(lo, hi)| rng.gen_range(lo..hi))
                        .collect();
                    assert!(best <= e.task.evaluate(&x));
                }
            }
        }
    }

    #[test]
    fn sphere_premises_hold_and_deceptive_break() {
        let fam = make_family(&sphere(3), 200, &[0.0, 0.0]).unwrap();
        let oracle = UsefulnessOracle::new(fam.target.clone());
        let metric = SimilarityMetric::neg_param_distance();
        let pairs = |fam: &Family, oracle: &UsefulnessOracle| -> Vec<(SimilarityScore, Usefulness)> {
            fam.pool
                .entries()
                .iter()
                .map(|e| {
                    (
                        metric
                            .measure(e.task.observable(), fam.target.observable())
                            .unwrap(),
                        oracle.usefulness(&e.knowledge).unwrap(),
                    )
                })
                .collect()
        };
        assert!(check_monotone_premises(&pairs(&fam, &oracle)).unwrap().holds());
        assert!(matches!(fam.link, LinkStatus::Known(_)));

        let spec = FamilySpec::new(FamilyKind::DeceptiveShift, 2, 1.0, 3);
        let dec = make_family(&spec, 200, &[0.0, 0.0]).unwrap();
        let oracle = UsefulnessOracle::new(dec.target.clone());
        assert!(!check_monotone_premises(&pairs(&dec, &oracle)).unwrap().holds());
        assert!(matches!(dec.link, LinkStatus::Broken { .. }));
    }

    #[test]
    fn cluster_placement_is_far() {
        let fam = make_family_with(
            &sphere(5),
            30,
            &[0.0, 0.0],
            SourcePlacement::Cluster {
                distance: 3.0,
                radius: 0.5,
            },
        )
        .unwrap();
        for th in &fam.source_params {
            assert!(th.iter().map(|x| x * x).sum::<f64>().sqrt() >= 2.5 - 1e-12);
        }
    }

    #[test]
    fn population_observable_mode() {
        let spec = FamilySpec::new(FamilyKind::ShiftedRotatedEllipsoid, 2, 1.0, 2);
        let fam = make_family(&spec, 2, &[1.0, 1.0]).unwrap();
        match fam.target.observable() {
            ObservableProperty::PopulationStats(st) => assert_eq!(st.sample_count(), 64),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(fam.link, LinkStatus::Unknown));
    }

    #[test]
    fn spec_validation() {
        let mut s = sphere(0);
        s.spread = 0.0;
        assert!(make_family(&s, 1, &[0.0, 0.0]).is_err());
        assert!(matches!(
            make_family(&sphere(0), 1, &[0.0]),
            Err(TaskError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn finite_closure_sizes() {
        let f = make_finite_family(3, &[0, 1, 2], FiniteDistribution::Uniform).unwrap();
        assert_eq!(f.len(), 6);
        assert!(f.closed_under_permutation());
        let c = make_finite_family(4, &[2, 2, 2, 2], FiniteDistribution::Uniform).unwrap();
        assert_eq!(c.len(), 1);
        // oracle: brute-force the 24 permutations and count distinct tables
        let seed = [0u8, 0, 1, 1];
        let mut seen: Vec<Vec<u8>> = Vec::new();
        for perm in (0..4).permutations(4) {
            let t: Vec<u8> = perm.iter().map(|&i| seed[i]).collect();
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        let f = make_finite_family(4, &seed, FiniteDistribution::Uniform).unwrap();
        assert_eq!(f.len(), seen.len());
        assert_eq!(f.len(), 6);
        assert!((f.distribution().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_family_errors() {
        assert!(matches!(
            make_finite_family(7, &[0; 7], FiniteDistribution::Uniform),
            Err(TaskError::SpaceTooLarge { .. })
        ));
        assert!(matches!(
            make_finite_family(3, &[0, 1, 4], FiniteDistribution::Uniform),
            Err(TaskError::SpaceTooLarge { .. })
        ));
        assert!(matches!(
            make_finite_family(3, &[0, 1, 2], FiniteDistribution::Custom(vec![0.5, 0.5])),
            Err(TaskError::InvalidDistribution(_))
        ));
        let not_closed = FiniteTaskFamily::new(
            2,
            2,
            vec![vec![0, 1]],
            FiniteDistribution::Uniform,
        )
        .unwrap();
        assert!(!not_closed.closed_under_permutation());
    }

    proptest! {
        #[test]
        fn closure_is_closed(seed in proptest::collection::vec(0u8..4, 1..=5)) {
            let n = seed.len();
            let fam = make_finite_family(n, &seed, FiniteDistribution::Uniform).unwrap();
            let members: BTreeSet<&Vec<u8>> = fam.functions().iter().collect();
            for perm in (0..n).permutations(n) {
                for g in fam.functions() {
                    prop_assert!(members.contains(&permute(g, &perm)));
                }
            }
        }
    }
}
