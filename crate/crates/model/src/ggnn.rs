//! Gated graph network over typed edges, read out at the invariant's nodes.

use forge_core::graphs::EncodedGraph;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gru::{gru_params, GruCell};
use crate::params::Params;
use crate::tape::{Tape, Var};
use crate::{ModelError, Vars};

pub const EDGE_KINDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GgnnConfig {
    /// Node embedding and state width.
    pub hidden_dim: usize,
    pub steps: usize,
    pub head_hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Upper bound on nodes packed into one minibatch.
    pub batch_token_budget: usize,
    pub seed: u64,
}

impl Default for GgnnConfig {
    fn default() -> Self {
        GgnnConfig {
            hidden_dim: 128,
            steps: 8,
            head_hidden: 128,
            epochs: 3,
            learning_rate: 0.001,
            batch_token_budget: 4000,
            seed: 0,
        }
    }
}

impl GgnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.hidden_dim == 0 || self.head_hidden == 0 {
            return bad("hidden_dim and head_hidden must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_token_budget == 0 {
            return bad("batch_token_budget must be positive");
        }
        Ok(())
    }
}

pub(crate) fn init_params<R: Rng>(rng: &mut R, cfg: &GgnnConfig, vocab: usize, kinds: usize) -> Params {
    let m = cfg.hidden_dim;
    let mut p = Params::new();
    p.add_init(rng, "subtoken_embed", vocab, m);
    p.add_init(rng, "kind_embed", kinds, m);
    for k in 0..EDGE_KINDS {
        p.add_init(rng, &format!("edge.{k}.w"), m, m);
        p.add_init(rng, &format!("edge.{k}.b"), 1, m);
    }
    gru_params(&mut p, rng, "gru", m, m);
    p.add_init(rng, "head.w1", m, cfg.head_hidden);
    p.add_init(rng, "head.b1", 1, cfg.head_hidden);
    p.add_init(rng, "head.w2", cfg.head_hidden, 1);
    p.add_init(rng, "head.b2", 1, 1);
    p
}

/// Logits (one row per graph) for a batch treated as one disjoint graph.
pub(crate) fn logits(
    tape: &mut Tape,
    vars: &Vars,
    steps: usize,
    batch: &[&EncodedGraph],
) -> Result<Var, ModelError> {
    let mut kinds = Vec::new();
    let mut subtokens = Vec::new();
    let mut edges: [Vec<(usize, usize)>; EDGE_KINDS] = Default::default();
    let mut readout = Vec::with_capacity(batch.len());
    let mut offset = 0;
    for (gi, g) in batch.iter().enumerate() {
        if g.invariant_nodes.is_empty() {
            return Err(ModelError::EmptyInvariantNodes(gi));
        }
        kinds.extend_from_slice(&g.kinds);
        for (v, subs) in g.subtokens.iter().enumerate() {
            subtokens.extend(subs.iter().map(|&s| (s, offset + v)));
        }
        for (k, list) in g.edges.iter().enumerate() {
            edges[k].extend(list.iter().map(|&(s, d)| (offset + s, offset + d)));
        }
        readout.push(g.invariant_nodes.iter().map(|&v| offset + v).collect());
        offset += g.len();
    }
    let n = offset;

    let kind_rows = tape.gather_rows(vars.get("kind_embed"), kinds);
    let sub_sum = tape.scatter_add(vars.get("subtoken_embed"), subtokens, n);
    let mut h = tape.add(kind_rows, sub_sum);

    let cell = GruCell::new(vars, "gru");
    for _ in 0..steps {
        let mut msg: Option<Var> = None;
        for (k, pairs) in edges.iter().enumerate() {
            if pairs.is_empty() {
                continue;
            }
            let t = tape.matmul(h, vars.get(&format!("edge.{k}.w")));
            let t = tape.add_row(t, vars.get(&format!("edge.{k}.b")));
            let m = tape.scatter_add(t, pairs.clone(), n);
            msg = Some(match msg {
                Some(acc) => tape.add(acc, m),
                None => m,
            });
        }
        let msg = match msg {
            Some(m) => m,
            None => tape.constant(ndarray::Array2::zeros(tape.value(h).raw_dim())),
        };
        h = cell.step(tape, msg, h);
    }

    let r = tape.segment_mean(h, readout);
    let hidden = tape.matmul(r, vars.get("head.w1"));
    let hidden = tape.add_row(hidden, vars.get("head.b1"));
    let hidden = tape.tanh(hidden);
    let out = tape.matmul(hidden, vars.get("head.w2"));
    Ok(tape.add_row(out, vars.get("head.b2")))
}
