//! A trained validator: configuration, vocabulary and parameters, plus
//! batched scoring and the checkpoint format.

use std::fmt;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use forge_core::graphs::{invariant_only, EncodedGraph, MethodGraph, Vocabulary};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::params::{NamedTensor, Params};
use crate::tape::Tape;
use crate::{ggnn, rnn, GgnnConfig, ModelError, RnnConfig, Vars};

pub const CHECKPOINT_FORMAT: &str = "forge-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ggnn,
    /// The graph network fed only the invariant's own subtree.
    Nocontext,
    Rnn,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ggnn" => Ok(ModelKind::Ggnn),
            "nocontext" => Ok(ModelKind::Nocontext),
            "rnn" => Ok(ModelKind::Rnn),
            _ => Err(format!("unknown model `{s}` (expected ggnn, rnn or nocontext)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ggnn => "ggnn",
            ModelKind::Nocontext => "nocontext",
            ModelKind::Rnn => "rnn",
        })
    }
}

/// The graph settings serve both `ggnn` and `nocontext`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub ggnn: GgnnConfig,
    #[serde(default)]
    pub rnn: RnnConfig,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig { kind, ggnn: GgnnConfig::default(), rnn: RnnConfig::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.kind {
            ModelKind::Rnn => self.rnn.validate(),
            _ => {
                self.ggnn.validate()?;
                if self.ggnn.steps < 8 {
                    tracing::warn!(steps = self.ggnn.steps, "fewer than 8 propagation steps");
                }
                Ok(())
            }
        }
    }

    pub fn epochs(&self) -> usize {
        match self.kind {
            ModelKind::Rnn => self.rnn.epochs,
            _ => self.ggnn.epochs,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self.kind {
            ModelKind::Rnn => self.rnn.learning_rate,
            _ => self.ggnn.learning_rate,
        }
    }

    pub fn batch_budget(&self) -> usize {
        match self.kind {
            ModelKind::Rnn => self.rnn.batch_token_budget,
            _ => self.ggnn.batch_token_budget,
        }
    }

    pub fn seed(&self) -> u64 {
        match self.kind {
            ModelKind::Rnn => self.rnn.seed,
            _ => self.ggnn.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.ggnn.seed = seed;
        self.rnn.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Params,
    /// Completed training epochs.
    pub epoch: usize,
}

/// Greedy packing in the given order: a batch closes when the next item
/// would exceed the budget. An oversized item gets a batch of its own.
pub fn pack(sizes: &[usize], order: &[usize], budget: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut used = 0;
    for &i in order {
        if !cur.is_empty() && used + sizes[i] > budget {
            batches.push(std::mem::take(&mut cur));
            used = 0;
        }
        cur.push(i);
        used += sizes[i];
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches
}

impl Model {
    /// Fresh parameters drawn from the config's seed.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
        let params = match config.kind {
            ModelKind::Rnn => rnn::init_params(&mut rng, &config.rnn, vocab.len()),
            _ => ggnn::init_params(&mut rng, &config.ggnn, vocab.len(), vocab.n_kinds()),
        };
        Ok(Model { config, vocab, params, epoch: 0 })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// The graph as this model sees it.
    pub fn prepare(kind: ModelKind, g: &MethodGraph) -> Result<MethodGraph, ModelError> {
        Ok(match kind {
            ModelKind::Nocontext => invariant_only(g)?,
            _ => g.clone(),
        })
    }

    pub fn encode(&self, g: &MethodGraph) -> Result<EncodedGraph, ModelError> {
        Ok(self.vocab.encode(&Model::prepare(self.kind(), g)?))
    }

    pub fn size(&self, g: &EncodedGraph) -> usize {
        match self.kind() {
            ModelKind::Rnn => g.method_tokens.len() + g.invariant_tokens.len(),
            _ => g.len(),
        }
    }

    fn check_vocabulary(&self, batch: &[&EncodedGraph]) -> Result<(), ModelError> {
        let table = match self.kind() {
            ModelKind::Rnn => "embed",
            _ => "subtoken_embed",
        };
        let rows = self
            .params
            .index(table)
            .map(|i| self.params.tensors[i].nrows())
            .ok_or_else(|| ModelError::VocabularyMismatch(format!("missing `{table}`")))?;
        if rows != self.vocab.len() {
            return Err(ModelError::VocabularyMismatch(format!(
                "{rows} embedding rows for {} subtokens",
                self.vocab.len()
            )));
        }
        let too_big = batch.iter().any(|g| {
            g.subtokens.iter().flatten().chain(&g.method_tokens).chain(&g.invariant_tokens).any(|&s| s >= rows)
        });
        if too_big {
            return Err(ModelError::VocabularyMismatch("subtoken index out of range".into()));
        }
        if self.kind() != ModelKind::Rnn {
            let kinds = self.params.get("kind_embed").nrows();
            if batch.iter().any(|g| g.kinds.iter().any(|&k| k >= kinds)) {
                return Err(ModelError::VocabularyMismatch("node kind out of range".into()));
            }
        }
        Ok(())
    }

    /// Logits of one batch; graph models run it as one disjoint union.
    pub fn logits(&self, batch: &[&EncodedGraph]) -> Result<Vec<f64>, ModelError> {
        self.check_vocabulary(batch)?;
        match self.kind() {
            ModelKind::Rnn => batch
                .par_iter()
                .map(|g| {
                    let mut tape = Tape::new();
                    let vars = Vars::new(&self.params, &mut tape);
                    let z = rnn::logit(&mut tape, &vars, self.config.rnn.state_per_direction, g)?;
                    Ok(tape.value(z)[[0, 0]])
                })
                .collect(),
            _ => {
                let mut tape = Tape::new();
                let vars = Vars::new(&self.params, &mut tape);
                let z = ggnn::logits(&mut tape, &vars, self.config.ggnn.steps, batch)?;
                Ok(tape.value(z).column(0).to_vec())
            }
        }
    }

    /// Mean binary cross-entropy over the batch.
    pub fn loss(&self, batch: &[&EncodedGraph]) -> Result<f64, ModelError> {
        let z = self.logits(batch)?;
        let mut total = 0.0;
        for (i, (z, g)) in z.iter().zip(batch).enumerate() {
            let y = g.label.ok_or(ModelError::MissingLabel(i))?;
            total += bce(*z, y);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean binary cross-entropy over the batch and its gradient with
    /// respect to every parameter tensor.
    pub fn loss_and_grads(&self, batch: &[&EncodedGraph]) -> Result<(f64, Vec<Array2<f64>>), ModelError> {
        self.check_vocabulary(batch)?;
        let targets = batch
            .iter()
            .enumerate()
            .map(|(i, g)| g.label.ok_or(ModelError::MissingLabel(i)))
            .collect::<Result<Vec<f64>, _>>()?;
        let shapes = self.params.shapes();
        let n = self.params.tensors.len();
        match self.kind() {
            ModelKind::Rnn => {
                let state = self.config.rnn.state_per_direction;
                let parts = batch
                    .par_iter()
                    .zip(&targets)
                    .map(|(g, &y)| {
                        let mut tape = Tape::new();
                        let vars = Vars::new(&self.params, &mut tape);
                        let z = rnn::logit(&mut tape, &vars, state, g)?;
                        let loss = tape.bce_with_logits(z, vec![y]);
                        Ok((tape.value(loss)[[0, 0]], tape.backward(loss, n, &shapes)))
                    })
                    .collect::<Result<Vec<_>, ModelError>>()?;
                // Summed in batch order so the result does not depend on scheduling.
                let scale = 1.0 / batch.len() as f64;
                let mut total = 0.0;
                let mut grads: Vec<Array2<f64>> = shapes.iter().map(|&s| Array2::zeros(s)).collect();
                for (loss, g) in parts {
                    total += loss;
                    for (acc, g) in grads.iter_mut().zip(g) {
                        acc.scaled_add(scale, &g);
                    }
                }
                Ok((total * scale, grads))
            }
            _ => {
                let mut tape = Tape::new();
                let vars = Vars::new(&self.params, &mut tape);
                let z = ggnn::logits(&mut tape, &vars, self.config.ggnn.steps, batch)?;
                let loss = tape.bce_with_logits(z, targets);
                Ok((tape.value(loss)[[0, 0]], tape.backward(loss, n, &shapes)))
            }
        }
    }

    /// Probabilities for already-encoded graphs, batched by the budget.
    pub fn predict_encoded(&self, graphs: &[EncodedGraph]) -> Result<Vec<f64>, ModelError> {
        let sizes: Vec<usize> = graphs.iter().map(|g| self.size(g)).collect();
        let order: Vec<usize> = (0..graphs.len()).collect();
        let batches = pack(&sizes, &order, self.config.batch_budget());
        let parts = batches
            .par_iter()
            .map(|b| {
                let refs: Vec<&EncodedGraph> = b.iter().map(|&i| &graphs[i]).collect();
                self.logits(&refs)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(parts.into_iter().flatten().map(sigmoid).collect())
    }

    pub fn predict(&self, graphs: &[MethodGraph]) -> Result<Vec<f64>, ModelError> {
        let encoded = graphs.iter().map(|g| self.encode(g)).collect::<Result<Vec<_>, _>>()?;
        self.predict_encoded(&encoded)
    }

    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            epoch: self.epoch,
            config: self.config.clone(),
            vocabulary: self.vocab.clone(),
            params: self.params.to_named(),
        };
        serde_json::to_writer(out, &ck).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Model, ModelError> {
        let ck: Checkpoint =
            serde_json::from_reader(input).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("not a checkpoint (format `{}`)", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        let vocab = ck.vocabulary.reindex();
        let template = Model::new(ck.config.clone(), vocab.clone())?;
        let params = Params::from_named(ck.params).map_err(ModelError::Checkpoint)?;
        if params.names != template.params.names || params.shapes() != template.params.shapes() {
            return Err(ModelError::Checkpoint("parameter names or shapes do not match the config".into()));
        }
        if !params.is_finite() {
            return Err(ModelError::Checkpoint("non-finite parameter".into()));
        }
        Ok(Model { config: ck.config, vocab, params, epoch: ck.epoch })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model, ModelError> {
        Model::read_checkpoint(BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    epoch: usize,
    config: ModelConfig,
    vocabulary: Vocabulary,
    params: Vec<NamedTensor>,
}

/// Binary cross-entropy of sigmoid(z) against y, stable for large |z|.
pub fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_respects_budget() {
        let sizes = [3, 4, 2, 9, 1];
        assert_eq!(pack(&sizes, &[0, 1, 2, 3, 4], 7), vec![vec![0, 1], vec![2], vec![3], vec![4]]);
        assert_eq!(pack(&sizes, &[4, 2, 0], 10), vec![vec![4, 2, 0]]);
        assert!(pack(&sizes, &[], 5).is_empty());
    }

    #[test]
    fn kind_names() {
        for k in [ModelKind::Ggnn, ModelKind::Nocontext, ModelKind::Rnn] {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
