//! Token-sequence baseline: the method and the invariant each pass through
//! their own bidirectional GRU; mean-pooled states feed a small head.

use forge_core::graphs::EncodedGraph;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gru::{gru_params, GruCell};
use crate::params::Params;
use crate::tape::{Tape, Var};
use crate::{ModelError, Vars};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnConfig {
    pub embedding_dim: usize,
    /// State width of each direction; the pooled encoding is twice this.
    pub state_per_direction: usize,
    pub head_hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Upper bound on tokens (method plus invariant) per minibatch.
    pub batch_token_budget: usize,
    pub seed: u64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            embedding_dim: 300,
            state_per_direction: 250,
            head_hidden: 128,
            epochs: 3,
            learning_rate: 0.001,
            batch_token_budget: 4000,
            seed: 0,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.embedding_dim == 0 || self.state_per_direction == 0 || self.head_hidden == 0 {
            return bad("embedding_dim, state_per_direction and head_hidden must be positive");
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

const ENCODERS: [&str; 2] = ["method", "invariant"];
const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

pub(crate) fn init_params<R: Rng>(rng: &mut R, cfg: &RnnConfig, vocab: usize) -> Params {
    let (e, h) = (cfg.embedding_dim, cfg.state_per_direction);
    let mut p = Params::new();
    p.add_init(rng, "embed", vocab, e);
    for enc in ENCODERS {
        for dir in DIRECTIONS {
            gru_params(&mut p, rng, &format!("{enc}.{dir}"), e, h);
        }
    }
    p.add_init(rng, "head.w1", 4 * h, cfg.head_hidden);
    p.add_init(rng, "head.b1", 1, cfg.head_hidden);
    p.add_init(rng, "head.w2", cfg.head_hidden, 1);
    p.add_init(rng, "head.b2", 1, 1);
    p
}

/// Mean of the states visited when running `cell` over the rows of `x`.
fn run(tape: &mut Tape, cell: &GruCell, x: Var, len: usize, state: usize, reverse: bool) -> Var {
    let proj = cell.project(tape, x);
    let mut h = tape.constant(Array2::zeros((1, state)));
    let mut sum: Option<Var> = None;
    for i in 0..len {
        let t = if reverse { len - 1 - i } else { i };
        let row = crate::gru::Projected {
            z: tape.gather_rows(proj.z, vec![t]),
            r: tape.gather_rows(proj.r, vec![t]),
            h: tape.gather_rows(proj.h, vec![t]),
        };
        h = cell.step_projected(tape, &row, h);
        sum = Some(match sum {
            Some(s) => tape.add(s, h),
            None => h,
        });
    }
    tape.scale(sum.expect("non-empty sequence"), 1.0 / len as f64)
}

/// 1×1 logit for one example.
pub(crate) fn logit(
    tape: &mut Tape,
    vars: &Vars,
    state: usize,
    g: &EncodedGraph,
) -> Result<Var, ModelError> {
    let embed = vars.get("embed");
    let mut pooled: Option<Var> = None;
    for (enc, tokens) in ENCODERS.iter().zip([&g.method_tokens, &g.invariant_tokens]) {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput(enc.to_string()));
        }
        let x = tape.gather_rows(embed, tokens.clone());
        for dir in DIRECTIONS {
            let cell = GruCell::new(vars, &format!("{enc}.{dir}"));
            let p = run(tape, &cell, x, tokens.len(), state, dir == "bwd");
            pooled = Some(match pooled {
                Some(acc) => tape.concat_cols(acc, p),
                None => p,
            });
        }
    }
    let r = pooled.expect("two encoders");
    let hidden = tape.matmul(r, vars.get("head.w1"));
    let hidden = tape.add_row(hidden, vars.get("head.b1"));
    let hidden = tape.tanh(hidden);
    let out = tape.matmul(hidden, vars.get("head.w2"));
    Ok(tape.add_row(out, vars.get("head.b2")))
}
