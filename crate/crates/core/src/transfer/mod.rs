//! Retrieval, mapping and evaluation as operators, and the engine that runs
//! any of their 15 compositions.

pub mod engine;
pub mod evaluation;
pub mod mapping;
pub mod method;
pub mod retrieval;

use thiserror::Error;

use crate::kernel::{KernelError, Knowledge, Task, TaskId};
use crate::similarity::SimilarityError;
use crate::tasks::TaskError;

pub use engine::{execute_method, Execution, GainRecord, GateRule, TransferContext};
pub use evaluation::{calibrate_threshold, classify_pool, evaluate_gate, EvaluationGate, GateMode};
pub use mapping::{
    apply_mapping, learn_mapping, map_mixture, optimize_mixture_weights, LearnedMapping, MappingDescriptor,
    MappingFamily, MappingHypothesis, MappingStatus,
};
pub use method::{enumerate_methods, infimum_table, parse_method_list, InfimumAnalysis, InfimumClass, Stage, TransferMethod};
pub use retrieval::{retrieve_hard, retrieve_soft, Retrieved};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("source pool is empty")]
    EmptyPool,
    #[error("knowledge origin {knowledge} does not match task {task}")]
    OriginMismatch { task: TaskId, knowledge: TaskId },
    #[error("top similarity {0} is shared by several candidates")]
    TiedArgmax(f64),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("weights sum to {0}, not 1")]
    WeightSumViolation(f64),
    #[error("expected {expected} weights, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("negative or non-finite weight {0}")]
    NegativeWeight(f64),
    #[error("link is not invertible: {0}")]
    LinkNotInvertible(String),
    #[error("usefulness {value} outside the link image [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("candidate similarity equals the threshold {0}")]
    ThresholdTie(f64),
    #[error("delta_u must be nonnegative, got {0}")]
    NegativeDeltaU(f64),
    #[error("invalid method: {0}")]
    InvalidMethod(String),
    #[error("invalid mapping hypothesis: {0}")]
    InvalidHypothesis(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// A source task and the knowledge it offers.
#[derive(Debug, Clone)]
pub struct SourceEntry {
    pub task: Task,
    pub knowledge: Knowledge,
}

#[derive(Debug, Clone)]
pub struct SourcePool {
    entries: Vec<SourceEntry>,
}

impl SourcePool {
    pub fn new(entries: Vec<SourceEntry>) -> Result<Self, TransferError> {
        if entries.is_empty() {
            return Err(TransferError::EmptyPool);
        }
        for e in &entries {
            if e.knowledge.origin != e.task.id() {
                return Err(TransferError::OriginMismatch {
                    task: e.task.id(),
                    knowledge: e.knowledge.origin,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[SourceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::param_task;
    use super::*;

    #[test]
    fn pool_validation() {
        assert!(matches!(SourcePool::new(vec![]), Err(TransferError::EmptyPool)));
        let e = SourceEntry {
            task: param_task(1, &[0.0]),
            knowledge: Knowledge::new(vec![0.0], TaskId(2)),
        };
        assert!(matches!(
            SourcePool::new(vec![e]),
            Err(TransferError::OriginMismatch { .. })
        ));
    }
}
