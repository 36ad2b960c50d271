//! Mining noisy-labeled method pre-/post-conditions from test traces, and the
//! program graphs a learned validator consumes.

pub mod metrics;
pub mod minilang;
pub mod corpusgen;
pub mod graphs;
pub mod invariants;
pub mod labeler;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
pub mod trace;
