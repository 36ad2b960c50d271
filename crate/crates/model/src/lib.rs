//! Learned invariant validators: a gated graph network over method graphs,
//! its invariant-only ablation, and a bidirectional GRU token baseline.
//! Gradients come from the small reverse-mode tape in [`tape`].

pub mod ggnn;
pub mod gradcheck;
mod gru;
pub mod model;
pub mod params;
pub mod rnn;
pub mod tape;
pub mod train;

use thiserror::Error;

pub use ggnn::GgnnConfig;
pub use model::{Model, ModelConfig, ModelKind};
pub use rnn::RnnConfig;
pub use train::{train, EpochReport, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("graph {0} of the batch has no invariant nodes")]
    EmptyInvariantNodes(usize),
    #[error("empty {0} token list")]
    EmptyInput(String),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("graph {0} has no label")]
    MissingLabel(usize),
    #[error("no training graphs")]
    NoData,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    Divergence {
        epoch: usize,
        step: usize,
        /// Parameters as of the last completed epoch, if any.
        last_good: Option<Box<Model>>,
    },
    #[error(transparent)]
    Graph(#[from] forge_core::graphs::GraphError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameter leaves of one tape, looked up by name.
pub(crate) struct Vars<'a> {
    names: &'a [String],
    vars: Vec<tape::Var>,
}

impl<'a> Vars<'a> {
    pub fn new(params: &'a params::Params, tape: &mut tape::Tape) -> Self {
        Vars { names: &params.names, vars: params.on_tape(tape) }
    }

    pub fn get(&self, name: &str) -> tape::Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter `{name}`"));
        self.vars[i]
    }
}
