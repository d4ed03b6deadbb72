//! Runs a [`TransferMethod`] stage by stage against a pool and a target.
//!
//! The engine carries one *held* candidate between stages:
//!
//! - `r` hard-retrieves the most similar source. With something already held
//!   it only switches when the pool's best is strictly more similar.
//! - `m` adapts the held candidate (retrieving one first if nothing is held).
//!   Mapping the incumbent is the identity.
//! - `e` gates the held candidate (retrieving one first if nothing is held).
//!   A rejected candidate is replaced by the incumbent, which is then held
//!   with similarity equal to the threshold.
//!
//! The implicit retrieval before a leading `m` or `e` is not a stage.

use serde::Serialize;

use crate::kernel::{Knowledge, ObservableProperty, SimilarityScore, TargetState, Task};
use crate::similarity::SimilarityMetric;
use crate::tasks::UsefulnessOracle;

use super::evaluation::EvaluationGate;
use super::mapping::{
    apply_mapping, learn_mapping, map_mixture, optimize_mixture_weights, MappingFamily, MappingHypothesis,
    MappingStatus,
};
use super::method::{Stage, TransferMethod};
use super::retrieval::retrieve_hard;
use super::{SourcePool, TransferError};

/// How the evaluation stage decides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GateRule {
    /// Threshold on measured similarity.
    Similarity(EvaluationGate),
    /// No usable link: compare usefulness directly, one oracle call per
    /// decision.
    Oracle,
}

impl GateRule {
    pub fn label(&self) -> &'static str {
        match self {
            GateRule::Similarity(g) => match g.mode {
                super::GateMode::Explicit => "explicit",
                super::GateMode::MixtureWashout => "mixture-washout",
            },
            GateRule::Oracle => "oracle gate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferContext {
    pub target: Task,
    pub metric: SimilarityMetric,
    pub gate: GateRule,
    pub hypothesis: MappingHypothesis,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainRecord {
    pub method: TransferMethod,
    /// `u(output) - u_tau`; exactly zero when nothing was transferred.
    pub delta: f64,
    pub transferred: bool,
    pub seed: u64,
    pub gate: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub knowledge: Knowledge,
    pub record: GainRecord,
    /// `u(after m) - u(before m)` when a mapping stage ran.
    pub delta_u: Option<f64>,
    pub mapping_status: Option<MappingStatus>,
    /// Similarity of the output as the engine last measured it; `None` for
    /// the incumbent.
    pub similarity: Option<SimilarityScore>,
}

#[derive(Debug, Clone)]
struct Held {
    knowledge: Knowledge,
    similarity: SimilarityScore,
    /// Pool index for unadapted sources.
    index: Option<usize>,
    incumbent: bool,
    /// Passed an oracle gate; retrieval may not replace it.
    locked: bool,
}

struct Run<'a> {
    pool: &'a SourcePool,
    state: &'a TargetState,
    ctx: &'a TransferContext,
    oracle: UsefulnessOracle,
    held: Option<Held>,
    delta_u: Option<f64>,
    mapping_status: Option<MappingStatus>,
}

impl Run<'_> {
    fn target_obs(&self) -> &ObservableProperty {
        self.ctx.target.observable()
    }

    fn retrieve(&self) -> Result<Held, TransferError> {
        let r = retrieve_hard(self.pool, self.target_obs(), &self.ctx.metric)?;
        Ok(Held {
            knowledge: r.knowledge,
            similarity: r.similarity,
            index: Some(r.index),
            incumbent: false,
            locked: false,
        })
    }

    fn held_or_retrieve(&mut self) -> Result<Held, TransferError> {
        match self.held.take() {
            Some(h) => Ok(h),
            None => self.retrieve(),
        }
    }

    fn usefulness(&self, v: &Knowledge) -> Result<f64, TransferError> {
        Ok(self.oracle.usefulness(v)?.value())
    }

    fn stage_retrieval(&mut self) -> Result<(), TransferError> {
        let best = self.retrieve()?;
        self.held = Some(match self.held.take() {
            None => best,
            Some(h) if h.locked => h,
            Some(h) if best.similarity > h.similarity => best,
            Some(h) => h,
        });
        Ok(())
    }

    fn stage_mapping(&mut self) -> Result<(), TransferError> {
        let held = self.held_or_retrieve()?;
        if held.incumbent {
            self.delta_u = Some(0.0);
            self.held = Some(held);
            return Ok(());
        }
        let index = held
            .index
            .expect("mapping runs at most once, so a held source is unadapted");
        let before = self.usefulness(&held.knowledge)?;
        let (knowledge, similarity, status) = match self.ctx.hypothesis.family {
            MappingFamily::MixtureWeights if self.pool.len() >= 2 => {
                let w = optimize_mixture_weights(
                    self.pool,
                    self.target_obs(),
                    &self.ctx.metric,
                    self.ctx.hypothesis.max_iters,
                )?;
                let out = map_mixture(self.pool, &w, &self.ctx.target, &self.ctx.metric)?;
                if out.similarity > held.similarity {
                    (out.knowledge, out.similarity, MappingStatus::Improved)
                } else {
                    (held.knowledge.clone(), held.similarity, MappingStatus::NotRealizable)
                }
            }
            MappingFamily::MixtureWeights => {
                (held.knowledge.clone(), held.similarity, MappingStatus::NotRealizable)
            }
            _ => {
                let source = &self.pool.entries()[index];
                let learned = learn_mapping(
                    &source.task,
                    &held.knowledge,
                    self.target_obs(),
                    &self.ctx.hypothesis,
                    &self.ctx.metric,
                )?;
                let mapped = apply_mapping(&learned.descriptor, &held.knowledge, &self.ctx.target)?;
                (mapped, learned.achieved, learned.status)
            }
        };
        let after = self.usefulness(&knowledge)?;
        self.delta_u = Some(after - before);
        self.mapping_status = Some(status);
        self.held = Some(Held {
            knowledge,
            similarity,
            index: None,
            incumbent: false,
            locked: held.locked,
        });
        Ok(())
    }

    fn incumbent(&self, similarity: SimilarityScore, locked: bool) -> Held {
        Held {
            knowledge: self.state.incumbent.clone(),
            similarity,
            index: None,
            incumbent: true,
            locked,
        }
    }

    fn stage_evaluation(&mut self) -> Result<(), TransferError> {
        let held = self.held_or_retrieve()?;
        if held.incumbent {
            self.held = Some(held);
            return Ok(());
        }
        self.held = Some(match self.ctx.gate {
            GateRule::Similarity(gate) => {
                if gate.accepts(held.similarity) {
                    held
                } else {
                    self.incumbent(gate.threshold, false)
                }
            }
            GateRule::Oracle => {
                if self.usefulness(&held.knowledge)? > self.state.incumbent_usefulness.value() {
                    Held { locked: true, ..held }
                } else {
                    self.incumbent(held.similarity, true)
                }
            }
        });
        Ok(())
    }
}

/// Run `method` left to right and score the output against the incumbent.
pub fn execute_method(
    method: &TransferMethod,
    pool: &SourcePool,
    state: &TargetState,
    ctx: &TransferContext,
    seed: u64,
) -> Result<Execution, TransferError> {
    let mut run = Run {
        pool,
        state,
        ctx,
        oracle: UsefulnessOracle::new(ctx.target.clone()),
        held: None,
        delta_u: None,
        mapping_status: None,
    };
    for stage in method.stages() {
        match stage {
            Stage::Retrieval => run.stage_retrieval()?,
            Stage::Mapping => run.stage_mapping()?,
            Stage::Evaluation => run.stage_evaluation()?,
        }
    }
    let held = run.held.take().expect("every stage leaves a held candidate");
    let (delta, similarity) = if held.incumbent {
        (0.0, None)
    } else {
        let u = run.usefulness(&held.knowledge)?;
        (u - state.incumbent_usefulness.value(), Some(held.similarity))
    };
    Ok(Execution {
        knowledge: held.knowledge,
        record: GainRecord {
            method: method.clone(),
            delta,
            transferred: !held.incumbent,
            seed,
            gate: ctx.gate.label(),
        },
        delta_u: run.delta_u,
        mapping_status: run.mapping_status,
        similarity,
    })
}
