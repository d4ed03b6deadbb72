//! Composable analogy-based evolutionary transfer optimization.
//!
//! Knowledge moves from source tasks to a target through three stages:
//! retrieval by observable similarity, mapping that raises that similarity,
//! and an evaluation gate that only admits knowledge more useful than the
//! incumbent. [`transfer`] composes them; [`lab`] turns each guarantee into
//! an experiment with a verdict.

pub mod evolver;
pub mod kernel;
pub mod lab;
pub mod nfl;
pub mod similarity;
pub mod tasks;
pub mod transfer;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/knowledge.md")]
    mod knowledge {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/mapping.md")]
    mod mapping {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/composition.md")]
    mod composition {}
    #[doc = include_str!("../../../book/src/evolver.md")]
    mod evolver {}
    #[doc = include_str!("../../../book/src/nfl.md")]
    mod nfl {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
