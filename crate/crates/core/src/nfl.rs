//! Exhaustive performance accounting over finite function families.
//!
//! For a deterministic non-revisiting optimizer, a horizon and a success
//! predicate, the expected success over a distribution `P(g)` is the dot
//! product of a per-function performance vector with the distribution
//! vector. [`alignment`] computes it both ways: as that dot product, and by
//! walking the entire space `V^X` and weighting each function by its
//! probability.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::tasks::{FiniteDistribution, FiniteTaskFamily, TaskError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NflError {
    #[error("horizon {horizon} exceeds |X| = {size_x}")]
    HorizonTooLarge { horizon: usize, size_x: usize },
    #[error("probe location {probe} outside 0..{size_x}")]
    InvalidProbe { probe: usize, size_x: usize },
    #[error("no function in the family matches the requested concentration")]
    EmptySelection,
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Rule for choosing the next point from the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Policy {
    /// 0, 1, 2, ...
    Sequential,
    /// |X|-1, |X|-2, ...
    Reverse,
    /// `(last point + last value + 1) mod |X|`, stepping forward past visited
    /// points.
    Adaptive,
    /// Probe a source's optimum location first, then fall back to
    /// [`Policy::Sequential`].
    TransferBiased { probe: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BiasLabel {
    GeneralSearch,
    AnalogyTransfer { method: String, source: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeterministicOptimizer {
    pub id: String,
    pub policy: Policy,
    pub bias: BiasLabel,
}

impl DeterministicOptimizer {
    pub fn general(id: &str, policy: Policy) -> Self {
        Self {
            id: id.to_string(),
            policy,
            bias: BiasLabel::GeneralSearch,
        }
    }

    /// Probes `probe` first; the optimum location of a source function.
    pub fn transfer(id: &str, probe: usize, source: usize) -> Self {
        Self {
            id: id.to_string(),
            policy: Policy::TransferBiased { probe },
            bias: BiasLabel::AnalogyTransfer {
                method: "r".into(),
                source,
            },
        }
    }

    fn first_unvisited_from(start: usize, n: usize, visited: &[bool]) -> usize {
        (0..n)
            .map(|i| (start + i) % n)
            .find(|&p| !visited[p])
            .expect("history shorter than |X|")
    }

    /// Next point given the history; never a visited one.
    pub fn next_point(&self, history: &[(usize, u8)], size_x: usize) -> usize {
        let mut visited = vec![false; size_x];
        for &(p, _) in history {
            visited[p] = true;
        }
        match self.policy {
            Policy::Sequential => Self::first_unvisited_from(0, size_x, &visited),
            Policy::Reverse => (0..size_x).rev().find(|&p| !visited[p]).expect("history shorter than |X|"),
            Policy::Adaptive => {
                let start = history.last().map_or(0, |&(p, v)| p + v as usize + 1);
                Self::first_unvisited_from(start % size_x, size_x, &visited)
            }
            Policy::TransferBiased { probe } => {
                if probe < size_x && !visited[probe] {
                    probe
                } else {
                    Self::first_unvisited_from(0, size_x, &visited)
                }
            }
        }
    }

    /// The `(point, value)` sequence produced on `g` over `horizon` steps.
    pub fn trajectory(&self, g: &[u8], horizon: usize) -> Vec<(usize, u8)> {
        let mut history = Vec::with_capacity(horizon);
        for _ in 0..horizon.min(g.len()) {
            let p = self.next_point(&history, g.len());
            history.push((p, g[p]));
        }
        history
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SuccessPredicate {
    /// The global minimum value was seen.
    FoundMinimum,
    /// Best value seen is at most the `q`-quantile of `g`'s values.
    BestAtMostQuantile(f64),
}

impl SuccessPredicate {
    pub fn holds(&self, g: &[u8], history: &[(usize, u8)]) -> bool {
        let Some(best) = history.iter().map(|&(_, v)| v).min() else {
            return false;
        };
        match *self {
            SuccessPredicate::FoundMinimum => Some(best) == g.iter().copied().min(),
            SuccessPredicate::BestAtMostQuantile(q) => {
                let mut sorted = g.to_vec();
                sorted.sort_unstable();
                let idx = ((q.clamp(0.0, 1.0)) * (sorted.len() - 1) as f64).floor() as usize;
                best <= sorted[idx]
            }
        }
    }
}

fn check_horizon(horizon: usize, size_x: usize) -> Result<(), NflError> {
    if horizon > size_x {
        return Err(NflError::HorizonTooLarge { horizon, size_x });
    }
    Ok(())
}

fn success(opt: &DeterministicOptimizer, g: &[u8], horizon: usize, pred: SuccessPredicate) -> f64 {
    if pred.holds(g, &opt.trajectory(g, horizon)) {
        1.0
    } else {
        0.0
    }
}

/// One entry per family member: 1 if the run succeeds, else 0.
pub fn performance_vector(
    opt: &DeterministicOptimizer,
    family: &FiniteTaskFamily,
    horizon: usize,
    pred: SuccessPredicate,
) -> Result<Vec<f64>, NflError> {
    check_horizon(horizon, family.size_x())?;
    Ok(family
        .functions()
        .par_iter()
        .map(|g| success(opt, g, horizon, pred))
        .collect())
}

/// Expected success computed by enumerating every function in `V^X` and
/// looking up its probability; functions outside the family weigh zero.
pub fn direct_expectation(
    opt: &DeterministicOptimizer,
    family: &FiniteTaskFamily,
    horizon: usize,
    pred: SuccessPredicate,
) -> Result<f64, NflError> {
    check_horizon(horizon, family.size_x())?;
    let weight: HashMap<&[u8], f64> = family
        .functions()
        .iter()
        .zip(family.distribution())
        .map(|(g, &p)| (g.as_slice(), p))
        .collect();
    let (n, v) = (family.size_x(), family.value_set_size());
    let total = v.pow(n as u32);
    let mut sum = 0.0;
    let mut g = vec![0u8; n];
    for code in 0..total {
        let mut c = code;
        for slot in g.iter_mut() {
            *slot = (c % v) as u8;
            c /= v;
        }
        if let Some(&p) = weight.get(g.as_slice()) {
            sum += p * success(opt, &g, horizon, pred);
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentRecord {
    pub performance: Vec<f64>,
    pub distribution: Vec<f64>,
    pub dot: f64,
    pub direct_expectation: f64,
}

impl AlignmentRecord {
    pub fn discrepancy(&self) -> f64 {
        (self.dot - self.direct_expectation).abs()
    }
}

pub fn alignment(
    opt: &DeterministicOptimizer,
    family: &FiniteTaskFamily,
    horizon: usize,
    pred: SuccessPredicate,
) -> Result<AlignmentRecord, NflError> {
    let performance = performance_vector(opt, family, horizon, pred)?;
    let distribution = family.distribution().to_vec();
    let dot = performance.iter().zip(&distribution).map(|(a, p)| a * p).sum();
    let direct_expectation = direct_expectation(opt, family, horizon, pred)?;
    Ok(AlignmentRecord {
        performance,
        distribution,
        dot,
        direct_expectation,
    })
}

/// Uniform weight over members whose minimum is attained at `at` but not
/// at `not_at`.
pub fn concentrated_distribution(
    family: &FiniteTaskFamily,
    at: usize,
    not_at: usize,
) -> Result<FiniteTaskFamily, NflError> {
    let n = family.size_x();
    for probe in [at, not_at] {
        if probe >= n {
            return Err(NflError::InvalidProbe { probe, size_x: n });
        }
    }
    let selected: Vec<bool> = family
        .functions()
        .iter()
        .map(|g| {
            let min = *g.iter().min().unwrap();
            g[at] == min && g[not_at] != min
        })
        .collect();
    let count = selected.iter().filter(|&&s| s).count();
    if count == 0 {
        return Err(NflError::EmptySelection);
    }
    let weights = selected
        .iter()
        .map(|&s| if s { 1.0 / count as f64 } else { 0.0 })
        .collect();
    Ok(family.reweighted(FiniteDistribution::Custom(weights))?)
}
