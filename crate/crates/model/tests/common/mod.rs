#![allow(dead_code)]

use forge_core::corpusgen::{generate, Coverage, GenConfig};
use forge_core::graphs::{build_vocab, labeled_graph, program_graphs, MethodGraph};
use forge_model::{GgnnConfig, Model, ModelConfig, ModelKind, RnnConfig};

/// Ground-truth labeled graphs of a small generated corpus.
pub fn corpus_graphs(n_projects: usize, methods: usize, seed: u64) -> Vec<MethodGraph> {
    let cfg = GenConfig {
        n_projects,
        methods_per_project: methods,
        coverage: Coverage::Full,
        seed,
        ..GenConfig::default()
    };
    let mut out = Vec::new();
    for p in generate(&cfg).unwrap() {
        let bases = program_graphs(&p.program().unwrap(), &p.name);
        for gt in &p.ground_truth {
            let base = bases[&gt.method].as_ref().unwrap();
            out.push(labeled_graph(base, &gt.structured, Some(gt.label)).unwrap());
        }
    }
    out
}

pub fn small_config(kind: ModelKind, seed: u64) -> ModelConfig {
    ModelConfig {
        kind,
        ggnn: GgnnConfig { hidden_dim: 6, steps: 8, head_hidden: 5, seed, ..GgnnConfig::default() },
        rnn: RnnConfig { embedding_dim: 5, state_per_direction: 4, head_hidden: 5, seed, ..RnnConfig::default() },
    }
}

/// A model with fresh parameters and a vocabulary over `graphs`.
pub fn fresh_model(config: ModelConfig, graphs: &[MethodGraph]) -> Model {
    let prepared: Vec<MethodGraph> = graphs.iter().map(|g| Model::prepare(config.kind, g).unwrap()).collect();
    Model::new(config, build_vocab(&prepared)).unwrap()
}
