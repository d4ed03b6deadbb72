//! Core domain types and the rank machinery behind similarity-based inference.
//!
//! Similarity and usefulness are both finite, totally ordered scalars. When the
//! link between them is strictly monotone, the rank of a candidate's usefulness
//! inside a pool equals the rank of its similarity inside the matching
//! similarity pool; [`infer_usefulness_rank`] exploits exactly that.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("pool contains duplicate value {0}")]
    DuplicateValues(f64),
    #[error("value {0} is not a member of the pool")]
    NotMember(f64),
    #[error("need at least 3 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("invalid bounds in dimension {dim}: lo {lo} must be < hi {hi}")]
    InvalidBounds { dim: usize, lo: f64, hi: f64 },
    #[error("coordinate {dim} = {value} lies outside the task bounds")]
    OutOfBounds { dim: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    AsymmetricCovariance(f64),
    #[error("population statistics need sample_count >= 2, got {0}")]
    TooFewSamples(usize),
}

macro_rules! finite_scalar {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
        #[serde(transparent)]
        pub struct $name(f64);

        impl $name {
            pub fn new(value: f64) -> Result<Self, KernelError> {
                if value.is_finite() {
                    Ok(Self(value))
                } else {
                    Err(KernelError::NonFinite(value))
                }
            }

            #[inline]
            pub fn value(self) -> f64 {
                self.0
            }
        }

        impl Eq for $name {}

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                self.0.total_cmp(&other.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl TryFrom<f64> for $name {
            type Error = KernelError;
            fn try_from(value: f64) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }
    };
}

finite_scalar! {
    /// Measured similarity between the observables of two tasks. Higher means
    /// more alike.
    SimilarityScore
}

finite_scalar! {
    /// Benefit of a piece of knowledge for the target task. Higher is better;
    /// for minimization objectives this is the negated objective value.
    Usefulness
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Moment summary of a population: mean, unbiased covariance and sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationStats {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    sample_count: usize,
}

impl PopulationStats {
    pub fn new(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        sample_count: usize,
    ) -> Result<Self, KernelError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(KernelError::DimensionMismatch {
                expected: d,
                actual: covariance.nrows(),
            });
        }
        if sample_count < 2 {
            return Err(KernelError::TooFewSamples(sample_count));
        }
        if let Some(bad) = mean.iter().chain(covariance.iter()).find(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite(*bad));
        }
        let mut asym = 0.0_f64;
        for i in 0..d {
            for j in (i + 1)..d {
                asym = asym.max((covariance[(i, j)] - covariance[(j, i)]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(KernelError::AsymmetricCovariance(asym));
        }
        Ok(Self {
            mean,
            covariance,
            sample_count,
        })
    }

    /// Sample mean and unbiased covariance of `samples` (rows are points).
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self, KernelError> {
        let n = samples.len();
        if n < 2 {
            return Err(KernelError::TooFewSamples(n));
        }
        let d = samples[0].len();
        let mut mean = DVector::zeros(d);
        for s in samples {
            if s.len() != d {
                return Err(KernelError::DimensionMismatch {
                    expected: d,
                    actual: s.len(),
                });
            }
            mean += DVector::from_column_slice(s);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for s in samples {
            let c = DVector::from_column_slice(s) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        // exact symmetry; the outer products above are symmetric up to rounding
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov, n)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Information about a task that is visible without solving it.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableProperty {
    /// The family parameter vector of the task.
    ParamVector(Vec<f64>),
    /// Moments of a population sampled on the task.
    PopulationStats(PopulationStats),
}

impl ObservableProperty {
    pub fn dim(&self) -> usize {
        match self {
            Self::ParamVector(p) => p.len(),
            Self::PopulationStats(s) => s.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::ParamVector(_) => "ParamVector",
            Self::PopulationStats(_) => "PopulationStats",
        }
    }
}

pub type Objective = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A minimization task over a box-bounded real domain.
#[derive(Clone)]
pub struct Task {
    id: TaskId,
    objective: Objective,
    bounds: Vec<(f64, f64)>,
    observable: ObservableProperty,
}

impl fmt::Debug for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("id", &self.id)
            .field("bounds", &self.bounds)
            .field("observable", &self.observable)
            .finish_non_exhaustive()
    }
}

impl Task {
    pub fn new(
        id: TaskId,
        objective: Objective,
        bounds: Vec<(f64, f64)>,
        observable: ObservableProperty,
    ) -> Result<Self, KernelError> {
        for (dim, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(KernelError::InvalidBounds { dim, lo, hi });
            }
        }
        Ok(Self {
            id,
            objective,
            bounds,
            observable,
        })
    }

    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn observable(&self) -> &ObservableProperty {
        &self.observable
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.bounds)
                .all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    /// Componentwise clamp into the bounds. Returns the point and whether any
    /// coordinate moved.
    pub fn clamp(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let mut moved = false;
        let out = x
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| {
                let c = v.clamp(lo, hi);
                moved |= c != v;
                c
            })
            .collect();
        (out, moved)
    }
}

/// A transferable candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Knowledge {
    pub solution: Vec<f64>,
    pub origin: TaskId,
    /// Set once a mapping has been applied.
    pub adapted: bool,
    /// Set when clamping to target bounds moved the solution.
    pub clamped: bool,
}

impl Knowledge {
    pub fn new(solution: Vec<f64>, origin: TaskId) -> Self {
        Self {
            solution,
            origin,
            adapted: false,
            clamped: false,
        }
    }

    /// Knowledge created on `task`; must lie inside its bounds.
    pub fn on_task(task: &Task, solution: Vec<f64>) -> Result<Self, KernelError> {
        if solution.len() != task.dim() {
            return Err(KernelError::DimensionMismatch {
                expected: task.dim(),
                actual: solution.len(),
            });
        }
        if let Some(bad) = solution.iter().find(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite(*bad));
        }
        if let Some(dim) = task
            .bounds()
            .iter()
            .zip(&solution)
            .position(|(&(lo, hi), v)| *v < lo || *v > hi)
        {
            return Err(KernelError::OutOfBounds {
                dim,
                value: solution[dim],
            });
        }
        Ok(Self::new(solution, task.id()))
    }
}

/// Where the target optimization currently stands at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub time: u64,
    pub incumbent: Knowledge,
    pub incumbent_usefulness: Usefulness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LinkDirection {
    Increasing,
    Decreasing,
}

/// Ground-truth similarity-to-usefulness link of a synthetic family.
#[derive(Clone)]
pub struct MonotoneLink {
    direction: LinkDirection,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    domain: (f64, f64),
}

impl fmt::Debug for MonotoneLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneLink")
            .field("direction", &self.direction)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl MonotoneLink {
    /// `domain` is the closed similarity interval the link is sampled over.
    pub fn new(
        direction: LinkDirection,
        domain: (f64, f64),
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            direction,
            eval: Arc::new(eval),
            domain,
        }
    }

    pub fn direction(&self) -> LinkDirection {
        self.direction
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn eval_raw(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    pub fn eval(&self, s: SimilarityScore) -> Result<Usefulness, KernelError> {
        Usefulness::new(self.eval_raw(s.value()))
    }

    /// `n` evenly spaced `(s, u)` samples across the domain.
    pub fn sample(&self, n: usize) -> Result<Vec<(SimilarityScore, Usefulness)>, KernelError> {
        let (lo, hi) = self.domain;
        (0..n)
            .map(|i| {
                let t = i as f64 / (n.max(2) - 1) as f64;
                let s = SimilarityScore::new(lo + t * (hi - lo))?;
                Ok((s, self.eval(s)?))
            })
            .collect()
    }
}

fn ensure_distinct(pool: &[f64]) -> Result<(), KernelError> {
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    match sorted.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(KernelError::DuplicateValues(w[0])),
        None => Ok(()),
    }
}

/// Number of pool elements strictly below `x`.
pub fn rank_of(x: f64, pool: &[f64]) -> Result<usize, KernelError> {
    if let Some(bad) = pool.iter().chain(std::iter::once(&x)).find(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite(*bad));
    }
    ensure_distinct(pool)?;
    if !pool.contains(&x) {
        return Err(KernelError::NotMember(x));
    }
    Ok(pool.iter().filter(|&&y| y < x).count())
}

/// Rank of the (unobserved) usefulness of the candidate whose similarity is
/// `query`, read off from its similarity rank. Decreasing links are negated
/// once up front.
pub fn infer_usefulness_rank(
    query: SimilarityScore,
    similarity_pool: &[SimilarityScore],
    direction: LinkDirection,
) -> Result<usize, KernelError> {
    let sign = match direction {
        LinkDirection::Increasing => 1.0,
        LinkDirection::Decreasing => -1.0,
    };
    let pool: Vec<f64> = similarity_pool.iter().map(|s| sign * s.value()).collect();
    rank_of(sign * query.value(), &pool)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PremiseCheck {
    Holds,
    /// First consecutive (by similarity) triple whose usefulness increments
    /// disagree in sign or vanish.
    ViolatedAt(SimilarityScore, SimilarityScore, SimilarityScore),
}

impl PremiseCheck {
    pub fn holds(&self) -> bool {
        matches!(self, Self::Holds)
    }
}

/// Scan `(s, u)` samples sorted by similarity and require
/// `(u2 - u1) * (u3 - u2) > 0` on every consecutive triple.
pub fn check_monotone_premises(
    samples: &[(SimilarityScore, Usefulness)],
) -> Result<PremiseCheck, KernelError> {
    if samples.len() < 3 {
        return Err(KernelError::InsufficientSamples(samples.len()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|&(s, _)| s);
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(KernelError::DuplicateValues(w[0].0.value()));
    }
    for w in sorted.windows(3) {
        let (u1, u2, u3) = (w[0].1.value(), w[1].1.value(), w[2].1.value());
        if !((u2 - u1) * (u3 - u2) > 0.0) {
            return Ok(PremiseCheck::ViolatedAt(w[0].0, w[1].0, w[2].0));
        }
    }
    Ok(PremiseCheck::Holds)
}

/// Ranks of every element of a distinct-valued pool, in pool order.
pub fn ranks(pool: &[f64]) -> Result<Vec<usize>, KernelError> {
    ensure_distinct(pool)?;
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| pool[a].total_cmp(&pool[b]));
    let mut out = vec![0; pool.len()];
    for (r, i) in idx.into_iter().enumerate() {
        out[i] = r;
    }
    Ok(out)
}
