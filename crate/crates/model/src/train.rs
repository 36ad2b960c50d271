//! Minibatch training with Adam on mean binary cross-entropy.

use forge_core::graphs::{build_vocab, EncodedGraph, MethodGraph};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{pack, Model};
use crate::params::Adam;
use crate::{ModelConfig, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean per-example loss over the epoch's updates.
    pub mean_loss: f64,
    /// Mean loss over the whole training set once the epoch is done.
    pub end_loss: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean loss over the whole training set before the first update.
    pub step0_loss: f64,
    pub epochs: Vec<EpochReport>,
}

fn mean_loss(model: &Model, encoded: &[EncodedGraph]) -> Result<f64, ModelError> {
    let sizes: Vec<usize> = encoded.iter().map(|g| model.size(g)).collect();
    let order: Vec<usize> = (0..encoded.len()).collect();
    let mut total = 0.0;
    for b in pack(&sizes, &order, model.config.batch_budget()) {
        let refs: Vec<&EncodedGraph> = b.iter().map(|&i| &encoded[i]).collect();
        total += model.loss(&refs)? * refs.len() as f64;
    }
    Ok(total / encoded.len() as f64)
}

/// Trains a fresh model on labeled graphs. The vocabulary comes from the
/// training graphs; `on_epoch` sees the model after each epoch (for
/// checkpointing) and may abort by returning an error.
pub fn train<F>(config: ModelConfig, graphs: &[MethodGraph], mut on_epoch: F) -> Result<(Model, TrainReport), ModelError>
where
    F: FnMut(&Model, &EpochReport) -> Result<(), ModelError>,
{
    config.validate()?;
    if graphs.is_empty() {
        return Err(ModelError::NoData);
    }
    if let Some(i) = graphs.iter().position(|g| g.label.is_none()) {
        return Err(ModelError::MissingLabel(i));
    }
    let prepared = graphs
        .iter()
        .map(|g| Model::prepare(config.kind, g))
        .collect::<Result<Vec<_>, _>>()?;
    let vocab = build_vocab(&prepared);
    let mut model = Model::new(config, vocab)?;
    let encoded: Vec<EncodedGraph> = prepared.iter().map(|g| model.vocab.encode(g)).collect();
    let sizes: Vec<usize> = encoded.iter().map(|g| model.size(g)).collect();

    let step0_loss = mean_loss(&model, &encoded)?;
    tracing::info!(kind = %model.kind(), graphs = encoded.len(), vocab = model.vocab.len(), step0_loss, "training");

    let mut opt = Adam::new(&model.params, model.config.learning_rate());
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed() ^ 0x005e_ed0f_7a1e);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut last_good: Option<Box<Model>> = None;
    let mut epochs = Vec::new();

    for epoch in 1..=model.config.epochs() {
        order.shuffle(&mut rng);
        let batches = pack(&sizes, &order, model.config.batch_budget());
        let mut total = 0.0;
        for (step, b) in batches.iter().enumerate() {
            let refs: Vec<&EncodedGraph> = b.iter().map(|&i| &encoded[i]).collect();
            let (loss, grads) = model.loss_and_grads(&refs)?;
            if !loss.is_finite() {
                return Err(ModelError::Divergence { epoch, step, last_good });
            }
            opt.step(&mut model.params, &grads);
            if !model.params.is_finite() {
                return Err(ModelError::Divergence { epoch, step, last_good });
            }
            total += loss * b.len() as f64;
        }
        model.epoch = epoch;
        let report = EpochReport {
            epoch,
            mean_loss: total / encoded.len() as f64,
            end_loss: mean_loss(&model, &encoded)?,
            batches: batches.len(),
        };
        tracing::info!(epoch, loss = report.mean_loss, end_loss = report.end_loss, batches = report.batches, "epoch done");
        on_epoch(&model, &report)?;
        epochs.push(report);
        last_good = Some(Box::new(model.clone()));
    }
    Ok((model, TrainReport { step0_loss, epochs }))
}
